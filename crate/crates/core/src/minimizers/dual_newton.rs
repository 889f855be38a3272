//! Damped Newton on the concave dual of the separable penalty problems.
//!
//! With `β = b(Xᵀν)` and `b = ∇Φ*`, the multiplier ν minimizes the convex
//! function `φ(ν) = Σ Φ*((Xᵀν)ᵢ) − yᵀν`, whose Hessian `X diag(b′) Xᵀ` is
//! SPD whenever X has full row rank.

use crate::data::RegressionDataset;
use crate::error::{param, Error, Result};
use crate::linalg::{has_full_row_rank, l2_norm, spd_solve, weighted_gram, Matrix, Vector};
use crate::model::check_scale;
use crate::regularizers::{h_d, h_d_antiderivative, h_d_prime};

use super::{finish, ConstrainedSolution, Objective};

const MAX_ITERS: usize = 500;
/// Largest change of any `(Xᵀν)ᵢ` in one depth-2 Newton step.
const MAX_DUAL_MOVE: f64 = 10.0;
/// Fraction of the distance to `|Xᵀν|ᵢ = 1` a depth-D step may cover.
const BOUNDARY_FRACTION: f64 = 0.99;

/// Per-coordinate conjugate potential: value, first and second derivative.
trait Potential {
    fn eval(&self, i: usize, z: f64) -> Option<(f64, f64, f64)>;
    /// Largest step `t ≤ 1` keeping `z + t·dz` in the domain.
    fn max_step(&self, _z: &[f64], _dz: &[f64]) -> f64 {
        1.0
    }
}

/// `Φ*(z) = 2c·cosh z` with `c = α²w0ᵢ²`, evaluated in log space.
struct Hyperbolic {
    ln_c: Vec<f64>,
}

impl Potential for Hyperbolic {
    fn eval(&self, i: usize, z: f64) -> Option<(f64, f64, f64)> {
        let a = z.abs();
        let e = (self.ln_c[i] + a).exp();
        if !e.is_finite() {
            return None;
        }
        let tail = (-2.0 * a).exp();
        let cosh2 = e * (1.0 + tail);
        let sinh2 = (e * -(-2.0 * a).exp_m1()).copysign(z);
        Some((cosh2, sinh2, cosh2))
    }
}

/// `Φ*(z) = c·H_D(z)` on `|z| < 1` with `c = α^D`.
struct Homogeneous {
    c: f64,
    depth: u32,
}

impl Potential for Homogeneous {
    fn eval(&self, _i: usize, z: f64) -> Option<(f64, f64, f64)> {
        if !(z.abs() < 1.0) {
            return None;
        }
        let v = h_d_antiderivative(z, self.depth).ok()?;
        let g = h_d(z, self.depth).ok()?;
        let h = h_d_prime(z, self.depth).ok()?;
        let out = (self.c * v, self.c * g, self.c * h);
        (out.0.is_finite() && out.1.is_finite() && out.2.is_finite()).then_some(out)
    }

    fn max_step(&self, z: &[f64], dz: &[f64]) -> f64 {
        let mut t: f64 = 1.0;
        for (a, b) in z.iter().zip(dz) {
            if *b > 0.0 {
                t = t.min(BOUNDARY_FRACTION * (1.0 - a) / b);
            } else if *b < 0.0 {
                t = t.min(BOUNDARY_FRACTION * (-1.0 - a) / b);
            }
        }
        t
    }
}

struct DualState {
    value: f64,
    grad: Vector,
    weights: Vec<f64>,
    beta: Vec<f64>,
}

fn evaluate(data: &RegressionDataset, pot: &impl Potential, nu: &Vector) -> Option<DualState> {
    let x = &data.design;
    let z = x.tr_mul(nu);
    let d = data.d();
    let mut value = 0.0;
    let mut beta = vec![0.0; d];
    let mut weights = vec![0.0; d];
    for i in 0..d {
        let (v, g, h) = pot.eval(i, z[i])?;
        value += v;
        beta[i] = g;
        weights[i] = h;
    }
    value -= nu.dot(&data.targets_vec());
    let grad = x * Vector::from_column_slice(&beta) - data.targets_vec();
    value.is_finite().then_some(DualState { value, grad, weights, beta })
}

fn newton(data: &RegressionDataset, pot: impl Potential, tol: f64, cap_move: Option<f64>) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let n = data.n();
    let x = &data.design;
    let scale = l2_norm(&data.targets).max(1.0);
    let mut nu = Vector::zeros(n);
    let mut st = evaluate(data, &pot, &nu).ok_or_else(|| Error::Numerical("dual undefined at ν = 0".into()))?;
    for iter in 0..MAX_ITERS {
        let gnorm = st.grad.norm();
        if gnorm <= tol * scale {
            return Ok((st.beta, nu.as_slice().to_vec(), iter));
        }
        let hess = weighted_gram(x, &st.weights);
        let step = damped_solve(hess, &(-&st.grad))
            .ok_or_else(|| Error::Numerical(format!("singular dual Hessian at iteration {iter}")))?;
        let dz = x.tr_mul(&step);
        let mut t: f64 = 1.0;
        if let Some(cap) = cap_move {
            let m = dz.amax();
            if m > cap {
                t = cap / m;
            }
        }
        let z = x.tr_mul(&nu);
        t = t.min(pot.max_step(z.as_slice(), dz.as_slice()));
        let slope = st.grad.dot(&step);
        let mut accepted = None;
        for _ in 0..80 {
            let trial = &nu + &step * t;
            if let Some(s) = evaluate(data, &pot, &trial) {
                if s.value <= st.value + 1e-4 * t * slope || (s.grad.norm() < gnorm && (s.value - st.value).abs() <= 1e-13 * st.value.abs().max(1.0)) {
                    accepted = Some((trial, s));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, s)) => {
                nu = trial;
                st = s;
            }
            None => {
                if gnorm <= 1e3 * tol * scale {
                    return Ok((st.beta, nu.as_slice().to_vec(), iter));
                }
                return Err(Error::Numerical(format!(
                    "dual line search failed at iteration {iter}: ‖∇φ‖ = {gnorm:.3e}, directional slope {slope:.3e}"
                )));
            }
        }
    }
    Err(Error::Numerical(format!(
        "dual Newton did not converge in {MAX_ITERS} iterations (‖∇φ‖ = {:.3e})",
        st.grad.norm()
    )))
}

/// `argmin Q_{α,w0}(β) s.t. Xβ = y`, recovered as `β = 2α²w0²∘sinh(Xᵀν)`.
pub fn min_q_depth2(data: &RegressionDataset, alpha: f64, shape: &[f64], tol: f64) -> Result<ConstrainedSolution> {
    check_scale(alpha, shape)?;
    if shape.len() != data.d() {
        return param("shape length differs from the data dimension");
    }
    if !has_full_row_rank(&data.design) {
        return param("design must have full row rank");
    }
    let ln_alpha2 = 2.0 * alpha.ln();
    let pot = Hyperbolic { ln_c: shape.iter().map(|s| ln_alpha2 + 2.0 * s.ln()).collect() };
    let (beta, dual, iters) = newton(data, pot, tol, Some(MAX_DUAL_MOVE))?;
    finish(beta, dual, iters, data, &Objective::Q2 { alpha, shape: shape.to_vec() })
}

/// `argmin Q_α^D(β) s.t. Xβ = y` for D ≥ 3, recovered as `β = α^D h_D(Xᵀν)`
/// with every iterate strictly inside `‖Xᵀν‖∞ < 1`.
pub fn min_q_depth_d(data: &RegressionDataset, alpha: f64, depth: u32, tol: f64) -> Result<ConstrainedSolution> {
    check_scale(alpha, &[1.0])?;
    if depth < 3 {
        return param("min_q_depth_d needs depth ≥ 3; use min_q_depth2");
    }
    if !has_full_row_rank(&data.design) {
        return param("design must have full row rank");
    }
    let pot = Homogeneous { c: alpha.powi(depth as i32), depth };
    let (beta, dual, iters) = newton(data, pot, tol, None)?;
    finish(beta, dual, iters, data, &Objective::QD { alpha, depth })
}

/// Cholesky solve, adding a growing ridge when `h` is numerically singular.
fn damped_solve(mut h: Matrix, b: &Vector) -> Option<Vector> {
    if let Ok(v) = spd_solve(&h, b) {
        return Some(v);
    }
    let n = h.nrows();
    let base = (h.trace() / n as f64).max(f64::MIN_POSITIVE);
    let mut ridge = base * 1e-14;
    let mut added = 0.0;
    while ridge <= base {
        for i in 0..n {
            h[(i, i)] += ridge - added;
        }
        added = ridge;
        if let Ok(v) = spd_solve(&h, b) {
            return Some(v);
        }
        ridge *= 100.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_sparse_regression;

    #[test]
    fn separable_single_measurement() {
        let data = RegressionDataset::from_rows(&[vec![1.0, 0.0, 0.0]], vec![2.5]).unwrap();
        let s = min_q_depth2(&data, 0.3, &[1.0; 3], 1e-12).unwrap();
        assert!((s.beta[0] - 2.5).abs() < 1e-10);
        assert_eq!(s.beta[1], 0.0);
        let s = min_q_depth_d(&data, 0.3, 3, 1e-12).unwrap();
        assert!((s.beta[0] - 2.5).abs() < 1e-10 && s.beta[2] == 0.0);
    }

    #[test]
    fn symmetric_pair() {
        let data = RegressionDataset::from_rows(&[vec![1.0, 1.0]], vec![2.0]).unwrap();
        for alpha in [1e-6, 0.1, 1.0, 100.0] {
            let s = min_q_depth2(&data, alpha, &[1.0, 1.0], 1e-12).unwrap();
            assert!((s.beta[0] - 1.0).abs() < 1e-9 && (s.beta[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_targets_give_zero() {
        let mut ds = generate_sparse_regression(6, 3, 2, 0.0, 1).unwrap();
        ds.targets = vec![0.0; 3];
        let s = min_q_depth_d(&ds, 0.1, 4, 1e-12).unwrap();
        assert!(s.beta.iter().all(|b| *b == 0.0) && s.dual.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn extreme_scales_converge() {
        let ds = generate_sparse_regression(30, 10, 3, 0.0, 2).unwrap();
        for alpha in [1e-12, 1e-6, 1e3] {
            let s = min_q_depth2(&ds, alpha, &[1.0; 30], 1e-10).unwrap();
            assert!(s.feasibility <= 1e-8, "α={alpha}: {}", s.feasibility);
        }
        for (alpha, depth) in [(1e-4, 3u32), (1e-3, 4), (10.0, 3)] {
            let s = min_q_depth_d(&ds, alpha, depth, 1e-10).unwrap();
            assert!(s.feasibility <= 1e-8, "α={alpha} D={depth}");
        }
    }

    #[test]
    fn rejects_rank_deficient_design() {
        let data = RegressionDataset::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]], vec![1.0, 2.0]).unwrap();
        assert!(matches!(min_q_depth2(&data, 1.0, &[1.0, 1.0], 1e-10), Err(Error::Parameter(_))));
    }
}
