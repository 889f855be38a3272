//! Basis pursuit `min ‖β‖₁ s.t. Xβ = y` by over-relaxed ADMM with support polishing.

use nalgebra::SymmetricEigen;

use crate::data::RegressionDataset;
use crate::error::{Error, Result};
use crate::linalg::{l1_norm, Matrix, Vector};

use super::{verify_kkt, ConstrainedSolution, Objective};

#[derive(Clone, Copy, Debug)]
pub struct AdmmOptions {
    pub rho: f64,
    pub relaxation: f64,
    pub max_iters: usize,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self { rho: 1.0, relaxation: 1.6, max_iters: 200_000 }
    }
}

/// Pseudo-inverse of the SPD-or-singular Gram `XXᵀ`.
fn gram_pinv(x: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(x * x.transpose());
    let top = eig.eigenvalues.amax();
    let inv = eig.eigenvalues.map(|v| if v > top * 1e-12 { 1.0 / v } else { 0.0 });
    &eig.eigenvectors * Matrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

fn soft(v: f64, k: f64) -> f64 {
    if v > k {
        v - k
    } else if v < -k {
        v + k
    } else {
        0.0
    }
}

pub fn min_l1(data: &RegressionDataset, tol: f64) -> Result<ConstrainedSolution> {
    min_l1_with(data, tol, AdmmOptions::default())
}

pub fn min_l1_with(data: &RegressionDataset, tol: f64, opts: AdmmOptions) -> Result<ConstrainedSolution> {
    let x = &data.design;
    let y = data.targets_vec();
    let d = data.d();
    let pinv = gram_pinv(x);
    let project = |v: &Vector| -> Vector { v - x.transpose() * (&pinv * (x * v - &y)) };

    let origin = project(&Vector::zeros(d));
    let infeas = (x * &origin - &y).norm();
    if infeas > 1e-8 * y.norm().max(1.0) {
        return Err(Error::Infeasible(format!("y is not in the range of X (residual {infeas:.3e})")));
    }

    let mut rho = opts.rho;
    let mut z = origin.clone();
    let mut u = Vector::zeros(d);
    let mut iters = 0;
    let sqrt_d = (d as f64).sqrt();
    for k in 0..opts.max_iters {
        iters = k + 1;
        let xk = project(&(&z - &u));
        let xh = &xk * opts.relaxation + &z * (1.0 - opts.relaxation);
        let z_old = z.clone();
        z = (&xh + &u).map(|v| soft(v, 1.0 / rho));
        u += &xh - &z;
        let r = (&xk - &z).norm();
        let s = rho * (&z - &z_old).norm();
        let eps_pri = tol * sqrt_d + tol * xk.norm().max(z.norm());
        let eps_dual = tol * sqrt_d + tol * rho * u.norm();
        if r <= eps_pri && s <= eps_dual {
            break;
        }
        if k % 50 == 49 {
            if r > 10.0 * s {
                rho *= 2.0;
                u /= 2.0;
            } else if s > 10.0 * r {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }
    let raw = project(&z);
    let dual_raw = &pinv * (x * (&u * rho));
    let mut sol = ConstrainedSolution {
        beta: raw.as_slice().to_vec(),
        dual: dual_raw.as_slice().to_vec(),
        kkt_residual: 0.0,
        feasibility: 0.0,
        iterations: iters,
        non_unique: false,
    };
    let support_tol = 10.0 * tol * z.amax().max(1.0);
    if let Some(p) = polish(x, &y, &z, support_tol) {
        if l1_norm(&p.0) <= l1_norm(&sol.beta) + 1e-9 * l1_norm(&sol.beta).max(1.0) {
            sol.beta = p.0;
            if let Some(nu) = p.1 {
                sol.dual = nu;
            }
        }
    }
    let (kkt, feas) = verify_kkt(&sol, data, &Objective::L1, support_tol)?;
    sol.kkt_residual = kkt;
    sol.feasibility = feas;
    let xtn = x.tr_mul(&Vector::from_column_slice(&sol.dual));
    sol.non_unique = (0..d).any(|i| sol.beta[i].abs() <= support_tol && xtn[i].abs() > 1.0 - 1e-6);
    Ok(sol)
}

/// Re-solve on the detected support. Returns the polished β and, when the
/// support has exactly N columns, the dual solving `X_Sᵀν = sign(β_S)`.
fn polish(x: &Matrix, y: &Vector, z: &Vector, support_tol: f64) -> Option<(Vec<f64>, Option<Vec<f64>>)> {
    let support: Vec<usize> = (0..z.len()).filter(|&i| z[i].abs() > support_tol).collect();
    let n = x.nrows();
    if support.is_empty() || support.len() > n {
        return None;
    }
    let xs = Matrix::from_fn(n, support.len(), |i, j| x[(i, support[j])]);
    let bs = xs.clone().svd(true, true).solve(y, 1e-12).ok()?;
    if (&xs * &bs - y).norm() > 1e-9 * y.norm().max(1.0) {
        return None;
    }
    if support.iter().zip(bs.iter()).any(|(&i, b)| b.signum() != z[i].signum()) {
        return None;
    }
    let mut beta = vec![0.0; z.len()];
    for (j, &i) in support.iter().enumerate() {
        beta[i] = bs[j];
    }
    let dual = if support.len() == n {
        let signs = Vector::from_iterator(n, support.iter().map(|&i| z[i].signum()));
        xs.transpose().lu().solve(&signs).map(|v| v.as_slice().to_vec())
    } else {
        None
    };
    Some((beta, dual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_sparse_regression;

    #[test]
    fn two_column_example() {
        let data = RegressionDataset::from_rows(&[vec![1.0, 2.0]], vec![2.0]).unwrap();
        let s = min_l1(&data, 1e-10).unwrap();
        assert!(s.beta[0].abs() < 1e-12 && (s.beta[1] - 1.0).abs() < 1e-12, "{:?}", s.beta);
        assert!(!s.non_unique);
    }

    #[test]
    fn square_identity() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let data = RegressionDataset::from_rows(&rows, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let s = min_l1(&data, 1e-10).unwrap();
        for (a, b) in s.beta.iter().zip(&data.targets) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn infeasible_system() {
        let data = RegressionDataset::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]], vec![1.0, 3.0]).unwrap();
        assert!(matches!(min_l1(&data, 1e-10), Err(Error::Infeasible(_))));
    }

    /// Smallest ℓ1 norm over all basic feasible solutions (N-column supports).
    fn vertex_oracle(data: &RegressionDataset) -> f64 {
        let (n, d) = data.design.shape();
        let mut best = f64::INFINITY;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let xs = Matrix::from_fn(n, n, |i, j| data.design[(i, idx[j])]);
            if let Some(b) = xs.lu().solve(&data.targets_vec()) {
                best = best.min(b.iter().map(|v| v.abs()).sum());
            }
            // next combination
            let mut k = n;
            while k > 0 && idx[k - 1] == d - n + k - 1 {
                k -= 1;
            }
            if k == 0 {
                return best;
            }
            idx[k - 1] += 1;
            for j in k..n {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }

    #[test]
    fn matches_vertex_enumeration() {
        for seed in 0..5 {
            let ds = generate_sparse_regression(8, 4, 2, 0.3, seed).unwrap();
            let s = min_l1(&ds, 1e-11).unwrap();
            let oracle = vertex_oracle(&ds);
            assert!((l1_norm(&s.beta) - oracle).abs() < 1e-8 * oracle, "seed {seed}");
        }
    }

    #[test]
    fn recovers_planted_support() {
        let ds = generate_sparse_regression(50, 25, 3, 0.0, 5).unwrap();
        let s = min_l1(&ds, 1e-10).unwrap();
        let planted = ds.planted.as_ref().unwrap();
        for i in 0..50 {
            assert_eq!(s.beta[i].abs() > 1e-8, planted[i] != 0.0, "coordinate {i}");
        }
        assert!(s.kkt_residual < 1e-6);
    }
}
