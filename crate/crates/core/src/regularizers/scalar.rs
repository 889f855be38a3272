//! Scalar penalties: q (depth 2), h_D and its inverse, q_D (depth D ≥ 3), and r.

use crate::error::{param, Error, Result};
use crate::quadrature;

/// `asinh` through `ln1p`, accurate for tiny and for large negative arguments.
pub fn asinh(x: f64) -> f64 {
    let a = x.abs();
    let v = if a > 1e8 {
        std::f64::consts::LN_2 + a.ln()
    } else {
        (a + a * a / (1.0 + (1.0 + a * a).sqrt())).ln_1p()
    };
    v.copysign(x)
}

/// `q(z) = 2 − √(4+z²) + z·asinh(z/2)`, evaluated without cancellation.
pub fn q2(z: f64) -> f64 {
    let a = z.abs();
    let h = 2.0 + 2f64.hypot(a);
    a * asinh(0.5 * a) - a * (a / h)
}

/// `q′(z) = asinh(z/2)`.
pub fn q2_grad(z: f64) -> f64 {
    asinh(0.5 * z)
}

fn exponent(depth: u32) -> Result<f64> {
    match depth {
        0..=2 => param(format!("h_D needs depth ≥ 3, got {depth}")),
        _ => Ok(depth as f64 / (depth as f64 - 2.0)),
    }
}

/// `h_D(z) = (1−z)^{−p} − (1+z)^{−p}` with `p = D/(D−2)`.
pub fn h_d(z: f64, depth: u32) -> Result<f64> {
    let p = exponent(depth)?;
    if !(z.abs() < 1.0) {
        return Err(Error::Domain(format!("h_D is defined on (−1, 1), got {z}")));
    }
    Ok(h_raw(z, p))
}

fn h_raw(z: f64, p: f64) -> f64 {
    let a = z.abs();
    let v = if a < 0.5 {
        (1.0 + a).powf(-p) * (2.0 * p * a.atanh()).exp_m1()
    } else {
        h_of_gap(1.0 - a, p)
    };
    v.copysign(z)
}

/// `h_D(1 − s)` for the gap `s = 1 − z ∈ (0, 1]`.
fn h_of_gap(s: f64, p: f64) -> f64 {
    s.powf(-p) - (2.0 - s).powf(-p)
}

fn h_prime(a: f64, p: f64) -> f64 {
    p * ((1.0 - a).powf(-p - 1.0) + (1.0 + a).powf(-p - 1.0))
}

/// `h_D′(z) = p[(1−z)^{−p−1} + (1+z)^{−p−1}]`.
pub fn h_d_prime(z: f64, depth: u32) -> Result<f64> {
    let p = exponent(depth)?;
    if !(z.abs() < 1.0) {
        return Err(Error::Domain(format!("h_D is defined on (−1, 1), got {z}")));
    }
    Ok(h_prime(z.abs(), p))
}

/// `H_D(z) = ∫₀^z h_D`, the convex potential whose gradient is `h_D`.
pub fn h_d_antiderivative(z: f64, depth: u32) -> Result<f64> {
    let p = exponent(depth)?;
    if !(z.abs() < 1.0) {
        return Err(Error::Domain(format!("h_D is defined on (−1, 1), got {z}")));
    }
    let a = z.abs();
    Ok(h_antiderivative(a, 1.0 - a, p))
}

/// Solution of `h_D(z) = t`, carried with the gap `1 − |z|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HInverse {
    pub z: f64,
    pub gap: f64,
}

/// The unique `z ∈ (−1, 1)` with `h_D(z) = t`.
///
/// Near `|z| = 1` the root is located in the gap variable `s = 1 − |z|`,
/// which is returned alongside `z` since it carries more precision there.
pub fn h_d_inverse(t: f64, depth: u32, tol: f64) -> Result<HInverse> {
    let p = exponent(depth)?;
    if t.is_nan() {
        return Err(Error::Domain("h_D inverse of NaN".into()));
    }
    Ok(h_inverse_raw(t, p, tol))
}

fn h_inverse_raw(t: f64, p: f64, tol: f64) -> HInverse {
    let a = t.abs();
    if a == 0.0 {
        return HInverse { z: 0.0, gap: 1.0 };
    }
    if a == f64::INFINITY {
        return HInverse { z: 1f64.copysign(t), gap: 0.0 };
    }
    let tol = tol.max(4.0 * f64::EPSILON);
    let h_half = h_raw(0.5, p);
    let (z, gap) = if a <= h_half {
        let (mut lo, mut hi) = (0.0, 0.5);
        let mut z = (a / (2.0 * p)).min(0.5);
        for _ in 0..200 {
            let f = h_raw(z, p) - a;
            if f.abs() <= tol * 0.25 * a.max(f64::MIN_POSITIVE) {
                break;
            }
            if f > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let mut next = z - f / h_prime(z, p);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == z {
                break;
            }
            z = next;
        }
        (z, 1.0 - z)
    } else {
        // h(s) is decreasing in s; bracket from s^{−p} − 1 ≤ h(s) ≤ s^{−p} on (0, 1/2].
        let mut lo = (a + 1.0).powf(-1.0 / p);
        let mut hi = a.powf(-1.0 / p).min(0.5);
        let mut s = hi;
        for _ in 0..200 {
            let f = h_of_gap(s, p) - a;
            if f.abs() <= tol * 0.25 * a {
                break;
            }
            if f > 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let df = -p * (s.powf(-p - 1.0) + (2.0 - s).powf(-p - 1.0));
            let mut next = s - f / df;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == s {
                break;
            }
            s = next;
        }
        (1.0 - s, s)
    };
    HInverse { z: z.copysign(t), gap }
}

/// `∫₀^w h_D = [(1−w)^{1−p} + (1+w)^{1−p} − 2]/(p − 1)` for `w ≥ 0` with gap `1 − w`.
fn h_antiderivative(w: f64, gap: f64, p: f64) -> f64 {
    let a = 1.0 - p;
    if w < 0.1 {
        // 2 Σ_{k even} C(a, k) w^k
        let mut coeff = 1.0;
        let mut sum = 0.0;
        let mut pow = 1.0;
        for k in 1..=60 {
            coeff *= (a - (k as f64 - 1.0)) / k as f64;
            pow *= w;
            if k % 2 == 0 {
                let term = 2.0 * coeff * pow;
                sum += term;
                if term.abs() <= 1e-18 * sum.abs() {
                    break;
                }
            }
        }
        sum / (p - 1.0)
    } else {
        (gap.powf(a) + (1.0 + w).powf(a) - 2.0) / (p - 1.0)
    }
}

/// `q_D(z) = ∫₀^z h_D⁻¹(t) dt`.
///
/// Evaluated through the convex-conjugate identity
/// `q_D(z) = z·w − ∫₀^w h_D` with `w = h_D⁻¹(z)`, which is exact up to the
/// accuracy of the inverse. See [`q_d_quadrature`] for direct integration.
pub fn q_d(z: f64, depth: u32, tol: f64) -> Result<f64> {
    let p = exponent(depth)?;
    Ok(q_d_raw(z.abs(), p, tol))
}

fn q_d_raw(a: f64, p: f64, tol: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let inv = h_inverse_raw(a, p, tol);
    let v = a * inv.z - h_antiderivative(inv.z, inv.gap, p);
    v.max(0.0)
}

/// `q_D′(z) = h_D⁻¹(z)`.
pub fn q_d_grad(z: f64, depth: u32, tol: f64) -> Result<f64> {
    Ok(h_d_inverse(z, depth, tol)?.z)
}

/// `q_D(z)` by adaptive Gauss–Kronrod quadrature of the numerical inverse.
pub fn q_d_quadrature(z: f64, depth: u32, tol: f64) -> Result<f64> {
    let p = exponent(depth)?;
    let a = z.abs();
    let inner = (tol * 1e-3).max(1e-15);
    let r = quadrature::integrate(|t| h_inverse_raw(t, p, inner).z, 0.0, a, tol * 1e-2, tol, 10_000);
    Ok(r.value)
}

/// Coefficients of `p_z(u) = u⁴ − 6u³ + (12−2z²)u² − (8+10z²)u + z² + z⁴`, highest first.
pub fn r2_quartic(z: f64) -> [f64; 5] {
    let z2 = z * z;
    [1.0, -6.0, 12.0 - 2.0 * z2, -(8.0 + 10.0 * z2), z2 + z2 * z2]
}

fn horner(c: &[f64; 5], u: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut dv = 0.0;
    for &a in c {
        dv = dv * u + v;
        v = v * u + a;
    }
    (v, dv)
}

/// `r(z) = min (w₊−1)² + (w₋−1)²` subject to `w₊² − w₋² = z`.
///
/// This is the smallest nonnegative real root of `p_z`. At `z = 0` the
/// quartic factors as `u(u−2)³`, and the root `0` is taken.
pub fn r2(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("r(z) needs finite z, got {z}")));
    }
    let a = z.abs();
    if a == 0.0 {
        return Ok(0.0);
    }
    let c = r2_quartic(a);
    let companion = nalgebra::Matrix4::new(
        -c[1], -c[2], -c[3], -c[4],
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
    );
    let scale = 1.0 + a * a;
    let mut best: Option<f64> = None;
    for root in companion.complex_eigenvalues().iter() {
        if root.im.abs() > 1e-6 * (1.0 + root.re.abs()) || root.re < -1e-9 * scale {
            continue;
        }
        let u = polish(&c, root.re.max(0.0));
        if u >= 0.0 && best.is_none_or(|b| u < b) {
            best = Some(u);
        }
    }
    best.ok_or_else(|| Error::Numerical(format!("no admissible real root of p_z at z = {z}")))
}

fn polish(c: &[f64; 5], mut u: f64) -> f64 {
    for _ in 0..20 {
        let (v, dv) = horner(c, u);
        if dv == 0.0 {
            break;
        }
        let step = v / dv;
        u -= step;
        if step.abs() <= 1e-16 * u.abs().max(1e-300) {
            break;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use proptest::prelude::*;

    #[test]
    fn asinh_matches_std_and_is_odd() {
        for &x in &[-1e12, -300.0, -2.0, -1e-9, 0.0, 1e-9, 0.5, 3.0, 1e5, 1e200] {
            let ours = asinh(x);
            let std = f64::asinh(x);
            assert!((ours - std).abs() <= 1e-15 * std.abs().max(1e-300), "{x}");
            assert_eq!(asinh(-x), -ours);
        }
        assert!((asinh(1e-200) - 1e-200).abs() < 1e-215);
    }

    #[test]
    fn q2_against_quadrature() {
        let r = integrate(q2_grad, 0.0, 2.0, 1e-15, 1e-15, 100);
        assert!((q2(2.0) - r.value).abs() <= 1e-10);
        assert!((q2(2.0) - 0.934_320_049_292_895_8).abs() <= 1e-14);
        assert_eq!(q2(0.0), 0.0);
        assert_eq!(q2(-2.0), q2(2.0));
        for &z in &[0.01, 0.7, 5.0, 40.0] {
            let r = integrate(q2_grad, 0.0, z, 1e-14, 1e-14, 400);
            assert!((q2(z) - r.value).abs() <= 1e-10 * r.value.max(1.0), "{z}");
        }
    }

    #[test]
    fn q2_finite_difference_gradient() {
        let h = 1e-4;
        for i in -20..=20 {
            let z = 0.37 * i as f64;
            let fd = (q2(z + h) - q2(z - h)) / (2.0 * h);
            assert!((fd - q2_grad(z)).abs() < 1e-8, "{z}");
        }
    }

    #[test]
    fn h_d_examples() {
        assert_eq!(h_d(0.0, 3).unwrap(), 0.0);
        let exact = 8.0 - 1.5f64.powi(-3);
        assert!((h_d(0.5, 3).unwrap() - exact).abs() < 1e-13);
        assert!((exact - 7.703_703_703_703_703).abs() < 1e-12);
        assert_eq!(h_d(-0.3, 4).unwrap(), -h_d(0.3, 4).unwrap());
        assert!(matches!(h_d(1.0, 3), Err(Error::Domain(_))));
        assert!(matches!(h_d(0.1, 2), Err(Error::Parameter(_))));
        // small-argument branch against the direct form
        let (z, p) = (0.3, 3.0);
        let direct = (1.0f64 - z).powf(-p) - (1.0f64 + z).powf(-p);
        assert!((h_d(z, 3).unwrap() - direct).abs() < 1e-13 * direct);
    }

    #[test]
    fn antiderivative_and_derivative_agree() {
        for &z in &[0.05, 0.3, 0.8, -0.6] {
            let h = 1e-6;
            let fd = (h_d_antiderivative(z + h, 4).unwrap() - h_d_antiderivative(z - h, 4).unwrap()) / (2.0 * h);
            assert!((fd - h_d(z, 4).unwrap()).abs() < 1e-6 * fd.abs().max(1.0));
            let fd = (h_d(z + h, 4).unwrap() - h_d(z - h, 4).unwrap()) / (2.0 * h);
            assert!((fd - h_d_prime(z, 4).unwrap()).abs() < 1e-5 * fd.abs());
        }
    }

    #[test]
    fn h_d_inverse_round_trip() {
        let t = h_d(0.5, 3).unwrap();
        assert!((h_d_inverse(t, 3, 1e-12).unwrap().z - 0.5).abs() < 1e-10);
        assert_eq!(h_d_inverse(0.0, 5, 1e-12).unwrap().z, 0.0);
        for depth in [3, 4, 6, 10] {
            let mut worst: f64 = 0.0;
            for i in 0..100 {
                let t = 10f64.powf(-6.0 + 12.0 * i as f64 / 99.0);
                let inv = h_d_inverse(t, depth, 1e-12).unwrap();
                let back = h_of_gap(inv.gap, exponent(depth).unwrap());
                let back = if inv.z < 0.5 { h_d(inv.z, depth).unwrap() } else { back };
                worst = worst.max((back - t).abs() / t.max(1.0));
                let neg = h_d_inverse(-t, depth, 1e-12).unwrap();
                assert_eq!(neg.z, -inv.z);
            }
            assert!(worst <= 1e-8, "depth {depth}: {worst}");
        }
    }

    #[test]
    fn q_d_matches_quadrature() {
        for depth in [3, 4, 6, 10] {
            for &z in &[1e-4, 0.05, 0.9, 3.0, 7.7037, 50.0, 1e3] {
                let a = q_d(z, depth, 1e-14).unwrap();
                let b = q_d_quadrature(z, depth, 1e-12).unwrap();
                assert!((a - b).abs() <= 1e-9 * b.max(1e-6), "D={depth} z={z}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn q_d_small_argument_expansion() {
        for depth in [3u32, 4, 6] {
            let z = 1e-5;
            let d = depth as f64;
            let approx = (d - 2.0) / (4.0 * d) * z * z;
            let v = q_d(z, depth, 1e-15).unwrap();
            assert!((v - approx).abs() < 1e-6 * approx, "{depth}");
        }
    }

    #[test]
    fn q_d_derivative_is_inverse() {
        let z = 7.7037;
        let h = 1e-5;
        let fd = (q_d(z + h, 3, 1e-15).unwrap() - q_d(z - h, 3, 1e-15).unwrap()) / (2.0 * h);
        assert!((fd - 0.5).abs() < 1e-4);
        assert!((fd - q_d_grad(z, 3, 1e-15).unwrap()).abs() < 1e-6);
    }

    /// Golden-section minimization of the constrained distance over w₋ ∈ [0, 10].
    fn r2_oracle(z: f64) -> f64 {
        let f = |b: f64| {
            let a = (b * b + z).sqrt();
            (a - 1.0).powi(2) + (b - 1.0).powi(2)
        };
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..200 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        f(0.5 * (lo + hi))
    }

    #[test]
    fn r2_against_constrained_minimum() {
        assert_eq!(r2(0.0).unwrap(), 0.0);
        for i in 0..=40 {
            let z = 0.25 * i as f64;
            let a = r2(z).unwrap();
            let b = r2_oracle(z);
            assert!((a - b).abs() <= 1e-8, "z={z}: {a} vs {b}");
            assert_eq!(r2(-z).unwrap(), a);
        }
        assert!((r2(2.0).unwrap() - 0.422_781_412_42).abs() < 1e-9);
        assert!((r2(2.0).unwrap() - q2(2.0)).abs() > 1e-3);
    }

    #[test]
    fn r2_small_argument() {
        let z = 1e-3;
        assert!((r2(z).unwrap() - z * z / 8.0).abs() < 1e-3 * z * z);
    }

    fn second_difference(f: impl Fn(f64) -> f64, z: f64, h: f64) -> f64 {
        f(z + h) - 2.0 * f(z) + f(z - h)
    }

    proptest! {
        #[test]
        fn penalties_even_and_convex(z in -30.0f64..30.0) {
            let h = 1e-2;
            prop_assert!((q2(z) - q2(-z)).abs() == 0.0);
            prop_assert!(second_difference(q2, z, h) >= -1e-8);
            for depth in [3u32, 4, 6, 10] {
                let f = |x: f64| q_d(x, depth, 1e-14).unwrap();
                prop_assert!((f(z) - f(-z)).abs() <= 1e-12 * f(z).max(1.0));
                prop_assert!(second_difference(f, z, h) >= -1e-8);
            }
            let r = |x: f64| r2(x).unwrap();
            prop_assert!((r(z) - r(-z)).abs() <= 1e-12 * r(z).max(1.0));
            prop_assert!(second_difference(r, z, h) >= -1e-8);
        }
    }
}
