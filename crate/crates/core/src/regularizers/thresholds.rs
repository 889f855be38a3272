//! Closed-form initialization scales that guarantee ℓ1- or ℓ2-like behavior.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaThresholds {
    /// Any α at or below this gives an ℓ1 approximation ratio of 1 + ε.
    pub alpha_l1_sufficient: f64,
    /// Any α at or above this gives an ℓ2 approximation ratio of 1 + ε.
    pub alpha_l2_sufficient: f64,
    /// Scale below which `(1 ± ε)‖β‖₁` sandwiches `Q_α(β)/ln(1/α²)`.
    pub alpha1_lemma: f64,
    /// Scale above which `(1 ± ε)‖β‖₂²` sandwiches `4α²Q_α(β)`.
    pub alpha2_lemma: f64,
}

/// The four thresholds for tolerance `epsilon` and the given norms of β.
pub fn alpha_thresholds(epsilon: f64, l1_norm: f64, l2_norm: f64, d: usize) -> Result<AlphaThresholds> {
    if !(epsilon > 0.0 && epsilon < d as f64) {
        return param(format!("epsilon must lie in (0, {d}), got {epsilon}"));
    }
    if !(l1_norm > 0.0 && l2_norm > 0.0) {
        return param("norms must be positive");
    }
    let e = epsilon;
    let dd = d as f64;
    let alpha_l1_sufficient =
        (2.0 * (1.0 + e) * l1_norm).powf(-(2.0 + e) / (2.0 * e)).min((-dd / (e * l1_norm)).exp());
    let alpha_l2_sufficient = (2.0 * (1.0 + e) * (1.0 + 2.0 / e) * l2_norm).sqrt();
    let alpha1_lemma = 1f64
        .min(l1_norm.sqrt())
        .min((2.0 * l1_norm).powf(-1.0 / (2.0 * e)))
        .min((-dd / (2.0 * e * l1_norm)).exp());
    let alpha2_lemma = l2_norm.sqrt() * (1.0 + e.powf(-0.25));
    Ok(AlphaThresholds { alpha_l1_sufficient, alpha_l2_sufficient, alpha1_lemma, alpha2_lemma })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        let t = alpha_thresholds(2.0, 1.0, 1.0, 10).unwrap();
        assert!((t.alpha_l2_sufficient - 12f64.sqrt()).abs() < 1e-14);
        let t = alpha_thresholds(1.0, 1.0, 1.0, 10).unwrap();
        // min{4^{-3/2}, e^{-10}} = e^{-10}
        assert!((t.alpha_l1_sufficient - (-10f64).exp()).abs() < 1e-18);
        assert!((t.alpha_l1_sufficient - 4.54e-5).abs() < 1e-7);
        assert!((t.alpha1_lemma - (-5f64).exp()).abs() < 1e-16);
        assert!((t.alpha2_lemma - 2.0).abs() < 1e-15);
    }

    #[test]
    fn l1_threshold_nonincreasing_in_dimension() {
        let mut prev = f64::INFINITY;
        for d in 1..50 {
            let t = alpha_thresholds(0.5, 1.3, 1.0, d).unwrap();
            assert!(t.alpha_l1_sufficient <= prev);
            prev = t.alpha_l1_sufficient;
        }
    }

    #[test]
    fn rejects_out_of_range_epsilon() {
        assert!(alpha_thresholds(0.0, 1.0, 1.0, 3).is_err());
        assert!(alpha_thresholds(3.0, 1.0, 1.0, 3).is_err());
        assert!(alpha_thresholds(0.5, 0.0, 1.0, 3).is_err());
    }
}
