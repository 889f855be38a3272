//! Adaptive Dormand–Prince 5(4) integrator with FSAL and PI step control.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Edge of the real stability interval of the method, with a safety margin.
const STIFF_LIMIT: f64 = 2.5;

#[derive(Clone, Debug)]
pub struct Dopri5 {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Per-component multipliers of `abs_tol`.
    pub abs_scale: Option<Vec<f64>>,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    pub max_step: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-12, abs_scale: None, max_steps: 1_000_000, initial_step: None, max_step: f64::INFINITY }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepControl {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OdeStatus {
    /// Reached the final time.
    Finished,
    /// The step callback asked to stop.
    Stopped,
    /// Ran out of steps.
    StepLimit,
}

#[derive(Clone, Debug)]
pub struct OdeOutcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub status: OdeStatus,
}

impl Dopri5 {
    fn err_norm(&self, y: &[f64], y_new: &[f64], err: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..y.len() {
            let atol = match &self.abs_scale {
                Some(a) => self.abs_tol * a[i],
                None => self.abs_tol,
            };
            let sc = atol + self.rel_tol * y[i].abs().max(y_new[i].abs());
            let e = err[i] / sc;
            s += e * e;
        }
        (s / y.len().max(1) as f64).sqrt()
    }

    fn initial_step(&self, f: &mut impl FnMut(f64, &[f64], &mut [f64]), t0: f64, y0: &[f64], f0: &[f64], span: f64) -> f64 {
        if let Some(h) = self.initial_step {
            return h.min(span);
        }
        let n = y0.len();
        let sc: Vec<f64> = y0.iter().map(|v| self.abs_tol + self.rel_tol * v.abs()).collect();
        let d0 = (y0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h0 * d).collect();
        let mut f1 = vec![0.0; n];
        f(t0 + h0, &y1, &mut f1);
        let d2 = (f1.iter().zip(f0).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() / n as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(span).min(self.max_step)
    }

    /// Integrate `y′ = f(t, y)` from `t0` to `t_end`. `on_step` sees every
    /// accepted state and may stop the integration early.
    pub fn solve<F, C>(&self, f: F, t0: f64, y0: Vec<f64>, t_end: f64, on_step: C) -> Result<OdeOutcome>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        C: FnMut(f64, &[f64]) -> StepControl,
    {
        self.solve_with_spectral_bound(f, t0, y0, t_end, on_step, |_| 0.0)
    }

    /// As [`Dopri5::solve`], with `lambda(y)` estimating the largest Jacobian
    /// eigenvalue magnitude at `y`; steps are kept below the stability limit.
    pub fn solve_with_spectral_bound<F, C, L>(
        &self,
        mut f: F,
        t0: f64,
        y0: Vec<f64>,
        t_end: f64,
        mut on_step: C,
        mut lambda: L,
    ) -> Result<OdeOutcome>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        C: FnMut(f64, &[f64]) -> StepControl,
        L: FnMut(&[f64]) -> f64,
    {
        let n = y0.len();
        let mut y = y0;
        let mut t = t0;
        let mut k1 = vec![0.0; n];
        f(t, &y, &mut k1);
        if k1.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite derivative at initial state".into()));
        }
        if on_step(t, &y) == StepControl::Stop {
            return Ok(OdeOutcome { t, y, accepted: 0, rejected: 0, status: OdeStatus::Stopped });
        }
        let stable = |lam: f64| if lam > 0.0 { STIFF_LIMIT / lam } else { f64::INFINITY };
        let mut h_stable = stable(lambda(&y));
        let mut h = self.initial_step(&mut f, t, &y, &k1, t_end - t0).min(h_stable);
        let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        let mut y_new = vec![0.0; n];
        let mut err = vec![0.0; n];
        let (mut accepted, mut rejected) = (0usize, 0usize);
        let mut err_prev: f64 = 1e-4;
        let mut last_rejected = false;

        while t < t_end {
            if accepted + rejected >= self.max_steps {
                return Ok(OdeOutcome { t, y, accepted, rejected, status: OdeStatus::StepLimit });
            }
            if t + h > t_end {
                h = t_end - t;
            }
            for i in 0..n {
                tmp[i] = y[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, &tmp, &mut k4);
            for i in 0..n {
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, &tmp, &mut k5);
            for i in 0..n {
                tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + h, &tmp, &mut k6);
            // `tmp` keeps the sixth stage state for the stiffness estimate below.
            for i in 0..n {
                y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t + h, &y_new, &mut k7);
            for i in 0..n {
                err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let e = self.err_norm(&y, &y_new, &err);
            if !e.is_finite() {
                rejected += 1;
                h *= 0.1;
                if h <= f64::EPSILON * t.abs().max(1.0) {
                    return Err(Error::Diverged { message: "non-finite stages".into(), time: t, state: y });
                }
                last_rejected = true;
                continue;
            }
            if e <= 1.0 {
                // h·|λ| along the last two stages; explicit steps beyond the
                // stability boundary can park on spurious fixed points.
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..n {
                    num += (k7[i] - k6[i]).powi(2);
                    den += (y_new[i] - tmp[i]).powi(2);
                }
                let h_lambda = if den > 0.0 { h * (num / den).sqrt() } else { 0.0 };
                accepted += 1;
                t += h;
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut k1, &mut k7);
                if on_step(t, &y) == StepControl::Stop {
                    return Ok(OdeOutcome { t, y, accepted, rejected, status: OdeStatus::Stopped });
                }
                let mut fac = 0.9 * e.max(1e-10).powf(-0.17) * err_prev.powf(0.04);
                fac = fac.clamp(0.2, 10.0);
                if last_rejected {
                    fac = fac.min(1.0);
                }
                let mut h_next = h * fac;
                if h_lambda > STIFF_LIMIT {
                    h_next = h_next.min(h * STIFF_LIMIT / h_lambda);
                }
                h_stable = stable(lambda(&y));
                h_next = h_next.min(h_stable);
                h = h_next.min(self.max_step);
                err_prev = e.max(1e-4);
                last_rejected = false;
            } else {
                rejected += 1;
                h = (h * (0.9 * e.powf(-0.2)).max(0.2)).min(h_stable);
                last_rejected = true;
            }
            if h <= f64::EPSILON * t.abs().max(1.0) {
                return Err(Error::Diverged { message: "step size underflow".into(), time: t, state: y });
            }
        }
        Ok(OdeOutcome { t, y, accepted, rejected, status: OdeStatus::Finished })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let solver = Dopri5 { rel_tol: 1e-10, abs_tol: 1e-14, ..Default::default() };
        let out = solver
            .solve(|_, y, dy| dy[0] = -2.0 * y[0], 0.0, vec![1.0], 3.0, |_, _| StepControl::Continue)
            .unwrap();
        assert_eq!(out.status, OdeStatus::Finished);
        assert!((out.y[0] - (-6f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator_order() {
        let run = |tol: f64| {
            let solver = Dopri5 { rel_tol: tol, abs_tol: tol, ..Default::default() };
            let out = solver
                .solve(
                    |_, y, dy| {
                        dy[0] = y[1];
                        dy[1] = -y[0];
                    },
                    0.0,
                    vec![1.0, 0.0],
                    10.0,
                    |_, _| StepControl::Continue,
                )
                .unwrap();
            ((out.y[0] - 10f64.cos()).abs(), out.accepted)
        };
        let (e1, n1) = run(1e-6);
        let (e2, n2) = run(1e-10);
        assert!(e1 < 1e-4 && e2 < 1e-8);
        assert!(n2 > n1);
    }

    #[test]
    fn stop_callback() {
        let solver = Dopri5::default();
        let out = solver
            .solve(|_, _, dy| dy[0] = 1.0, 0.0, vec![0.0], 100.0, |_, y| {
                if y[0] > 5.0 { StepControl::Stop } else { StepControl::Continue }
            })
            .unwrap();
        assert_eq!(out.status, OdeStatus::Stopped);
        assert!(out.y[0] > 5.0 && out.t < 100.0);
    }

    #[test]
    fn blow_up_reports_error() {
        let solver = Dopri5::default();
        let r = solver.solve(|_, y, dy| dy[0] = y[0] * y[0], 0.0, vec![1.0], 2.0, |_, _| StepControl::Continue);
        assert!(r.is_err() || r.unwrap().y[0] > 1e10);
    }
}
