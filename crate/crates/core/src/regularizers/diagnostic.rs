//! The `Q(e₁)/Q(1/√d)` ratio that tracks the kernel-to-rich transition.

use crate::error::{param, Result};

use super::{q2, q_d, DEFAULT_TOL};

fn scalar_q(z: f64, depth: u32) -> Result<f64> {
    if depth == 2 {
        Ok(q2(z))
    } else {
        q_d(z, depth, DEFAULT_TOL)
    }
}

/// `Q_α^D(e₁) / Q_α^D(1_d/√d)`: 1 in the kernel regime, `1/√d` in the rich regime.
pub fn l1_ratio_diagnostic(alpha: f64, depth: u32, d: usize) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return param(format!("alpha must be positive, got {alpha}"));
    }
    if d < 2 {
        return param("ratio needs d ≥ 2");
    }
    if depth < 2 {
        return param(format!("depth must be at least 2, got {depth}"));
    }
    // Q_α^D(v) = c Σ q(vᵢ/c) with c = α^D (α² at depth 2)
    let ln_c = depth as f64 * alpha.ln();
    let c = ln_c.exp();
    let sqrt_d = (d as f64).sqrt();
    let num = scalar_q(1.0 / c, depth)?;
    let den = d as f64 * scalar_q(1.0 / (sqrt_d * c), depth)?;
    Ok(num / den)
}

/// The ratio at `points` log-spaced α in `[alpha_min, alpha_max]`.
pub fn l1_ratio_curve(alpha_min: f64, alpha_max: f64, points: usize, depth: u32, d: usize) -> Result<Vec<(f64, f64)>> {
    if !(alpha_min > 0.0 && alpha_max > alpha_min) || points < 2 {
        return param("ratio curve needs 0 < alpha_min < alpha_max and two points");
    }
    let (lo, hi) = (alpha_min.log10(), alpha_max.log10());
    (0..points)
        .map(|i| {
            let a = 10f64.powf(lo + (hi - lo) * i as f64 / (points - 1) as f64);
            Ok((a, l1_ratio_diagnostic(a, depth, d)?))
        })
        .collect()
}

/// Width in decades of α over which the normalized ratio
/// `(ρ − 1/√d)/(1 − 1/√d)` rises from 0.1 to 0.9, by linear interpolation
/// in log α. `None` if the curve does not cross both levels.
pub fn transition_width(curve: &[(f64, f64)], d: usize) -> Option<f64> {
    let floor = 1.0 / (d as f64).sqrt();
    let norm: Vec<(f64, f64)> = curve.iter().map(|&(a, r)| (a.log10(), (r - floor) / (1.0 - floor))).collect();
    let crossing = |level: f64| {
        norm.windows(2).find_map(|w| {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            (y0 < level && y1 >= level).then(|| x0 + (level - y0) * (x1 - x0) / (y1 - y0))
        })
    };
    Some(crossing(0.9)? - crossing(0.1)?)
}
