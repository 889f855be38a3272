//! Implicit and explicit regularizers of homogeneous models.

mod diagnostic;
mod scalar;
mod thresholds;

pub use diagnostic::{l1_ratio_curve, l1_ratio_diagnostic, transition_width};
pub use scalar::{
    asinh, h_d, h_d_antiderivative, h_d_inverse, h_d_prime, q2, q2_grad, q_d, q_d_grad, q_d_quadrature, r2, r2_quartic, HInverse,
};
pub use thresholds::{alpha_thresholds, AlphaThresholds};

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::linalg::{jacobi_singular_values, Matrix};
use crate::model::check_scale;

/// Tolerance used when a penalty is evaluated without an explicit one.
pub const DEFAULT_TOL: f64 = 1e-13;

/// Coordinatewise penalty `z ↦ φ(z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarPenalty {
    Q2,
    QD(u32),
    R2,
}

impl ScalarPenalty {
    pub fn value(&self, z: f64) -> Result<f64> {
        match *self {
            ScalarPenalty::Q2 => Ok(q2(z)),
            ScalarPenalty::QD(d) => q_d(z, d, DEFAULT_TOL),
            ScalarPenalty::R2 => r2(z),
        }
    }
}

/// `Q_{α,w0}(β) = Σ α²w0ᵢ² q(βᵢ/(α²w0ᵢ²))`.
pub fn q_general(beta: &[f64], alpha: f64, shape: &[f64]) -> Result<f64> {
    check_scale(alpha, shape)?;
    if beta.len() != shape.len() {
        return param("beta and shape differ in length");
    }
    Ok(beta
        .iter()
        .zip(shape)
        .map(|(b, s)| {
            let c = alpha * alpha * s * s;
            c * q2(b / c)
        })
        .sum())
}

/// `∇Q_{α,w0}(β)ᵢ = asinh(βᵢ/(2α²w0ᵢ²))`.
pub fn q_general_grad(beta: &[f64], alpha: f64, shape: &[f64]) -> Result<Vec<f64>> {
    check_scale(alpha, shape)?;
    if beta.len() != shape.len() {
        return param("beta and shape differ in length");
    }
    Ok(beta
        .iter()
        .zip(shape)
        .map(|(b, s)| asinh(b / (2.0 * alpha * alpha * s * s)))
        .collect())
}

/// `Q_α^D(β) = α^D Σ q_D(βᵢ/α^D)`; depth 2 is `Q_{α,1}`.
pub fn q_depth(beta: &[f64], alpha: f64, depth: u32, tol: f64) -> Result<f64> {
    if depth == 2 {
        return q_general(beta, alpha, &vec![1.0; beta.len()]);
    }
    if depth < 2 {
        return param(format!("depth must be at least 2, got {depth}"));
    }
    check_scale(alpha, &[1.0])?;
    let c = alpha.powi(depth as i32);
    let mut sum = 0.0;
    for b in beta {
        sum += c * q_d(b / c, depth, tol)?;
    }
    Ok(sum)
}

/// `R_{α,1}(β) = α² Σ r(βᵢ/α²)`, the squared parameter distance from
/// initialization needed to reach β. The α² factor makes this equal to
/// `min ‖w − α1‖²`, and does not move the argmin.
pub fn r_alpha(beta: &[f64], alpha: f64) -> Result<f64> {
    check_scale(alpha, &[1.0])?;
    let c = alpha * alpha;
    let mut sum = 0.0;
    for b in beta {
        sum += c * r2(b / c)?;
    }
    Ok(sum)
}

/// `Q_μ(spectrum(M)) = Σ μ² q(σᵢ/μ²)` over the singular values of M.
pub fn q_spectral(m: &Matrix, mu: f64) -> Result<f64> {
    let sv = jacobi_singular_values(m);
    q_general(&sv, mu, &vec![1.0; sv.len()])
}

/// Configuration of an implicit-bias functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RegularizerSpec {
    Depth2General { alpha: f64, shape: Vec<f64> },
    DepthD { alpha: f64, depth: u32 },
    Spectral { mu: f64 },
}

impl RegularizerSpec {
    /// Value on a vector; for `Spectral` the vector is read as a spectrum.
    pub fn value(&self, beta: &[f64]) -> Result<f64> {
        match self {
            RegularizerSpec::Depth2General { alpha, shape } => q_general(beta, *alpha, shape),
            RegularizerSpec::DepthD { alpha, depth } => q_depth(beta, *alpha, *depth, DEFAULT_TOL),
            RegularizerSpec::Spectral { mu } => q_general(beta, *mu, &vec![1.0; beta.len()]),
        }
    }

    pub fn gradient(&self, beta: &[f64]) -> Result<Vec<f64>> {
        match self {
            RegularizerSpec::Depth2General { alpha, shape } => q_general_grad(beta, *alpha, shape),
            RegularizerSpec::DepthD { alpha, depth } if *depth == 2 => {
                q_general_grad(beta, *alpha, &vec![1.0; beta.len()])
            }
            RegularizerSpec::DepthD { alpha, depth } => {
                check_scale(*alpha, &[1.0])?;
                let c = alpha.powi(*depth as i32);
                beta.iter().map(|b| q_d_grad(b / c, *depth, DEFAULT_TOL)).collect()
            }
            RegularizerSpec::Spectral { mu } => q_general_grad(beta, *mu, &vec![1.0; beta.len()]),
        }
    }
}

/// One row of the penalty table.
#[derive(Clone, Debug, Serialize)]
pub struct PenaltyRow {
    pub z: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    pub q6: f64,
    pub q10: f64,
    pub r2: f64,
}

pub const PENALTY_TABLE_HEADER: [&str; 7] = ["z", "q2", "qD_3", "qD_4", "qD_6", "qD_10", "r2"];

impl PenaltyRow {
    pub fn record(&self) -> Vec<String> {
        [self.z, self.q2, self.q3, self.q4, self.q6, self.q10, self.r2].map(crate::data::fmt_f64).to_vec()
    }
}

/// `(z, q2, q_D for D ∈ {3,4,6,10}, r2)` on `points` log-spaced z in `[z_min, z_max]`.
pub fn penalty_table(z_min: f64, z_max: f64, points: usize) -> Result<Vec<PenaltyRow>> {
    if !(z_min > 0.0 && z_max > z_min) || points < 2 {
        return param("penalty table needs 0 < z_min < z_max and at least two points");
    }
    let (lo, hi) = (z_min.ln(), z_max.ln());
    (0..points)
        .map(|i| {
            let z = (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp();
            Ok(PenaltyRow {
                z,
                q2: q2(z),
                q3: q_d(z, 3, DEFAULT_TOL)?,
                q4: q_d(z, 4, DEFAULT_TOL)?,
                q6: q_d(z, 6, DEFAULT_TOL)?,
                q10: q_d(z, 10, DEFAULT_TOL)?,
                r2: r2(z)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn q_general_examples() {
        let alpha: f64 = 0.7;
        let a2 = alpha * alpha;
        assert_eq!(q_general(&[0.0, 0.0], alpha, &[1.0, 1.0]).unwrap(), 0.0);
        let v = q_general(&[2.0 * a2, 0.0], alpha, &[1.0, 1.0]).unwrap();
        assert!((v - 0.934_320_049_292_895_8 * a2).abs() < 1e-14);
        assert!(q_general(&[1.0], 1.0, &[0.0]).is_err());
        assert!(q_general(&[1.0], 1.0, &[-1.0]).is_err());
    }

    #[test]
    fn depth2_reduces_to_general() {
        let beta = [0.3, -1.2, 4.0];
        let a = RegularizerSpec::Depth2General { alpha: 0.2, shape: vec![1.0; 3] };
        let b = RegularizerSpec::DepthD { alpha: 0.2, depth: 2 };
        assert_eq!(a.value(&beta).unwrap(), b.value(&beta).unwrap());
        assert_eq!(a.gradient(&beta).unwrap(), b.gradient(&beta).unwrap());
    }

    #[test]
    fn q_depth_scaling() {
        let beta = [0.4, -2.0, 0.0, 1.5];
        for depth in [3u32, 4] {
            let alpha: f64 = 0.6;
            let c = alpha.powi(depth as i32);
            let lhs = q_depth(&beta, alpha, depth, 1e-14).unwrap();
            let scaled: Vec<f64> = beta.iter().map(|b| b / c).collect();
            let rhs = c * q_depth(&scaled, 1.0, depth, 1e-14).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * lhs);
        }
        assert_eq!(q_depth(&[0.0; 3], 0.1, 3, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let beta = [0.5, -1.1];
        let spec = RegularizerSpec::DepthD { alpha: 0.8, depth: 3 };
        let g = spec.gradient(&beta).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut p = beta;
            let mut m = beta;
            p[i] += h;
            m[i] -= h;
            let fd = (spec.value(&p).unwrap() - spec.value(&m).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn spectral_uses_singular_values() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]);
        let v = q_spectral(&m, 1.0).unwrap();
        assert!((v - q2(3.0)).abs() < 1e-13);
    }

    #[test]
    fn lemma2_sandwich() {
        let mut rng = SeededRng::new(2024);
        for _ in 0..40 {
            let d = 1 + rng.below(20) as usize;
            let beta: Vec<f64> = (0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let l1: f64 = beta.iter().map(|b| b.abs()).sum();
            for eps in [0.25, 0.5] {
                let th = alpha_thresholds(eps, l1, 1.0, d).unwrap();
                for alpha in [th.alpha1_lemma, th.alpha1_lemma * 1e-3] {
                    let ratio = q_general(&beta, alpha, &vec![1.0; d]).unwrap() / (1.0 / (alpha * alpha)).ln();
                    assert!(ratio >= (1.0 - eps) * l1 && ratio <= (1.0 + eps) * l1, "{ratio} vs {l1}");
                }
            }
        }
    }

    #[test]
    fn lemma4_sandwich() {
        let mut rng = SeededRng::new(77);
        for _ in 0..40 {
            let d = 1 + rng.below(20) as usize;
            let beta: Vec<f64> = (0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let l2sq: f64 = beta.iter().map(|b| b * b).sum();
            for eps in [0.25, 0.5] {
                let th = alpha_thresholds(eps, 1.0, l2sq.sqrt(), d).unwrap();
                for alpha in [th.alpha2_lemma, th.alpha2_lemma * 10.0] {
                    let v = 4.0 * alpha * alpha * q_general(&beta, alpha, &vec![1.0; d]).unwrap();
                    assert!(v >= (1.0 - eps) * l2sq && v <= (1.0 + eps) * l2sq);
                }
            }
        }
    }

    #[test]
    fn weighted_l2_expansion() {
        // 4α²Q → Σβ²/w0²; the next term is O(α⁻⁴).
        let beta = [0.8, -0.3, 1.5];
        let shape = [0.5, 1.0, 2.0];
        let target: f64 = beta.iter().zip(&shape).map(|(b, s)| b * b / (s * s)).sum();
        let mut fitted = Vec::new();
        for alpha in [10.0f64, 20.0, 40.0, 80.0] {
            let v = 4.0 * alpha * alpha * q_general(&beta, alpha, &shape).unwrap();
            fitted.push((v - target).abs() * alpha.powi(4));
        }
        let c = fitted.iter().cloned().fold(0.0, f64::max);
        assert!(c < 10.0);
        assert!((fitted[3] - fitted[0]).abs() < 0.05 * fitted[0]);
    }

    #[test]
    fn rich_limit_ignores_shape() {
        let beta = [0.7, -0.2, 0.0, 0.4];
        let l1: f64 = beta.iter().map(|b: &f64| b.abs()).sum();
        let alpha: f64 = 1e-8;
        let a = q_general(&beta, alpha, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        let b = q_general(&beta, alpha, &[0.3, 2.0, 1.0, 5.0]).unwrap();
        let ln = (1.0 / (alpha * alpha)).ln();
        assert!((a - b).abs() / ln <= 1e-2 * l1);
    }

    #[test]
    fn r_alpha_is_scaled_distance() {
        let alpha: f64 = 0.5;
        let b = 0.3;
        let v = r_alpha(&[b], alpha).unwrap();
        let z = b / (alpha * alpha);
        assert!((v - alpha * alpha * r2(z).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn table_shape() {
        let rows = penalty_table(1e-3, 1e3, 13).unwrap();
        assert_eq!(rows.len(), 13);
        assert!((rows[0].z - 1e-3).abs() < 1e-15);
        assert!(rows.iter().all(|r| r.q2 > 0.0 && r.q3 > 0.0 && r.r2 > 0.0));
        assert!(penalty_table(0.0, 1.0, 10).is_err());
    }

    proptest! {
        #[test]
        fn q_general_permutation_invariant(
            beta in prop::collection::vec(-3.0f64..3.0, 5),
            shape in prop::collection::vec(0.1f64..3.0, 5),
            alpha in 0.01f64..10.0,
            rot in 0usize..5,
        ) {
            let mut bp = beta.clone();
            let mut sp = shape.clone();
            bp.rotate_left(rot);
            sp.rotate_left(rot);
            let a = q_general(&beta, alpha, &shape).unwrap();
            let b = q_general(&bp, alpha, &sp).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
            let a = q_depth(&beta, alpha, 3, 1e-13).unwrap();
            let b = q_depth(&bp, alpha, 3, 1e-13).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }
    }
}
