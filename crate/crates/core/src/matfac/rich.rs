//! Minimum-`Q_μ` solution for diagonal or commuting measurements.

use crate::data::RegressionDataset;
use crate::error::{param, Error, Result};
use crate::linalg::{sym_eigen_sorted, Matrix, Vector};
use crate::minimizers::min_q_depth2;

use super::{MeasurementKind, MeasurementSet};

/// Off-diagonal mass tolerated after joint diagonalization, relative to `‖Xₙ‖_F`.
const JOINT_DIAG_TOL: f64 = 1e-8;

/// `argmin Q_μ(spectrum(M)) s.t. ⟨Xₙ, M⟩ = yₙ`.
///
/// In a joint eigenbasis `Q` the constraint only sees `δ = diag(QᵀMQ)` and the
/// problem is the depth-2 diagonal minimizer with `α = μ` and unit shape.
pub fn solve_commutative_rich(meas: &MeasurementSet, targets: &[f64], mu: f64, tol: f64) -> Result<Matrix> {
    if targets.len() != meas.len() {
        return param(format!("{} targets for {} measurements", targets.len(), meas.len()));
    }
    let d = meas.dim();
    let basis = match meas.kind() {
        MeasurementKind::Diagonal => None,
        MeasurementKind::Commuting => Some(joint_eigenbasis(meas)?),
        MeasurementKind::General => return param("measurements must be diagonal or commuting"),
    };
    let design = match &basis {
        None => meas.diagonal_design(),
        Some(q) => {
            let rotated: Vec<Matrix> = meas.matrices().iter().map(|x| q.transpose() * x * q).collect();
            Matrix::from_fn(meas.len(), d, |n, i| rotated[n][(i, i)])
        }
    };
    let data = RegressionDataset::new(design, targets.to_vec(), None, 0.0)?;
    let sol = min_q_depth2(&data, mu, &vec![1.0; d], tol)?;
    let diag = Matrix::from_diagonal(&Vector::from_vec(sol.beta));
    Ok(match basis {
        None => diag,
        Some(q) => &q * diag * q.transpose(),
    })
}

/// Eigenvectors of a generic combination `Σ cₙXₙ`, verified against every `Xₙ`.
fn joint_eigenbasis(meas: &MeasurementSet) -> Result<Matrix> {
    // Golden-ratio weights avoid accidental eigenvalue collisions; retry
    // with other weights if the combination still has a degenerate spectrum.
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for attempt in 0..8 {
        let c: Vec<f64> = (0..meas.len()).map(|n| ((n + 1 + attempt * 7) as f64 * phi).fract() + 0.5).collect();
        let (_, q) = sym_eigen_sorted(&meas.combine(&c));
        let ok = meas.matrices().iter().all(|x| {
            let r = q.transpose() * x * &q;
            let off: f64 = (0..r.nrows())
                .flat_map(|i| (0..r.ncols()).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| r[(i, j)] * r[(i, j)])
                .sum::<f64>()
                .sqrt();
            off <= JOINT_DIAG_TOL * x.norm().max(f64::MIN_POSITIVE)
        });
        if ok {
            return Ok(q);
        }
    }
    Err(Error::Numerical("could not jointly diagonalize the measurements".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowConfig;
    use crate::matfac::{gaussian_init, integrate_factorization_flow, lifted_identity_init, FactorizationMode};
    use crate::rng::SeededRng;

    #[test]
    fn single_entry_is_separable() {
        let meas = MeasurementSet::entries(4, vec![(0, 0)]).unwrap();
        let m = solve_commutative_rich(&meas, &[2.5], 0.1, 1e-13).unwrap();
        let mut want = Matrix::zeros(4, 4);
        want[(0, 0)] = 2.5;
        assert!((m - want).amax() < 1e-12);
    }

    #[test]
    fn general_measurements_are_rejected() {
        let meas = MeasurementSet::entries(3, vec![(0, 1)]).unwrap();
        assert!(matches!(solve_commutative_rich(&meas, &[1.0], 1.0, 1e-12), Err(Error::Parameter(_))));
    }

    #[test]
    fn rotated_diagonal_problem_matches_diagonal_solution() {
        let mut rng = SeededRng::new(8);
        let (d, n) = (5, 3);
        let rows = Matrix::from_fn(n, d, |_, _| rng.normal());
        let diag = MeasurementSet::diagonal(&rows).unwrap();
        let (_, q) = sym_eigen_sorted(&{
            let a = Matrix::from_fn(d, d, |_, _| rng.normal());
            &a + a.transpose()
        });
        let rotated: Vec<Matrix> = diag.matrices().iter().map(|x| &q * x * q.transpose()).collect();
        let comm = MeasurementSet::new(rotated, MeasurementKind::Commuting).unwrap();
        let y = [1.0, -0.5, 2.0];
        let a = solve_commutative_rich(&diag, &y, 0.3, 1e-13).unwrap();
        let b = solve_commutative_rich(&comm, &y, 0.3, 1e-13).unwrap();
        assert!((&q * a * q.transpose() - b).amax() < 1e-9);
    }

    #[test]
    fn matches_lifted_identity_flow() {
        let mut rng = SeededRng::new(40);
        let (d, n) = (8, 4);
        let meas = MeasurementSet::diagonal(&Matrix::from_fn(n, d, |_, _| rng.normal())).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mu = 0.5;
        let solved = solve_commutative_rich(&meas, &y, mu, 1e-13).unwrap();
        let cfg = FlowConfig { rel_tol: 1e-10, residual_tol: 1e-10, ..Default::default() };
        let out = integrate_factorization_flow(&meas, &y, &lifted_identity_init(d, mu).unwrap(), &cfg, FactorizationMode::Flow)
            .unwrap();
        assert!(out.converged);
        let flow = out.final_model.product();
        assert!((&flow - &solved).norm() / solved.norm() < 1e-3);
    }

    #[test]
    fn gaussian_start_respects_lifted_scale() {
        // Off-diagonal contributions of a finite-width start shrink like k^{-1/2}.
        let mut rng = SeededRng::new(41);
        let (d, n, k) = (4, 3, 256);
        let meas = MeasurementSet::diagonal(&Matrix::from_fn(n, d, |_, _| rng.normal())).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mu2: f64 = 0.5;
        let alpha = (2.0 * mu2 / k as f64).sqrt();
        let init = gaussian_init(d, k, alpha, 3).unwrap().model;
        let cfg = FlowConfig { rel_tol: 1e-9, residual_tol: 1e-9, ..Default::default() };
        let out = integrate_factorization_flow(&meas, &y, &init, &cfg, FactorizationMode::Flow).unwrap();
        let solved = solve_commutative_rich(&meas, &y, mu2.sqrt(), 1e-13).unwrap();
        let fd = Matrix::from_diagonal(&out.final_model.product().diagonal());
        assert!((&fd - &solved).norm() / solved.norm() < 0.15);
    }
}
