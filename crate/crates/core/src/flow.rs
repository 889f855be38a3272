//! Gradient flow on the diagonal network and on the u∘v parametrization.
//!
//! The time integral of the residual `∫₀ᵗ r` is carried as extra ODE state
//! so the dual certificate shares the integrator's error control.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, RegressionDataset};
use crate::error::{param, Error, Result};
use crate::linalg::{inf_norm, l2_norm, power_iteration, Matrix};
use crate::model::{check_scale, DiagonalNetwork, LinearPredictor, UVNetwork};
use crate::ode::{Dopri5, OdeStatus, StepControl};
use crate::regularizers::h_d;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Local relative error of the integrator.
    pub rel_tol: f64,
    /// Stop once `‖Xβ − y‖₂` falls to this value.
    pub residual_tol: f64,
    pub max_time: f64,
    pub max_steps: usize,
    /// Keep every n-th accepted step in the trace.
    pub record_every: usize,
    /// Also store β at every recorded step.
    pub record_beta: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            residual_tol: 1e-8,
            max_time: 1e8,
            max_steps: 2_000_000,
            record_every: 1,
            record_beta: false,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.residual_tol > 0.0 && self.max_time > 0.0) {
            return param("flow tolerances and max_time must be positive");
        }
        if self.max_steps == 0 || self.record_every == 0 {
            return param("max_steps and record_every must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time: f64,
    pub loss: f64,
    pub residual_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FlowModel {
    Diagonal(DiagonalNetwork),
    UV(UVNetwork),
}

impl FlowModel {
    pub fn predictor(&self) -> Vec<f64> {
        match self {
            FlowModel::Diagonal(m) => m.predictor(),
            FlowModel::UV(m) => m.predictor(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowResult {
    pub final_model: FlowModel,
    pub beta_inf: Vec<f64>,
    /// `ν = −c·∫r` with `c = 4` at depth 2 and `c = D(D−2)α^{D−2}` above.
    pub dual_nu: Vec<f64>,
    /// `∫₀ᵀ r(s) ds`.
    pub residual_integral: Vec<f64>,
    pub residual_trace: Vec<TracePoint>,
    pub converged: bool,
    pub steps: usize,
    pub final_time: f64,
    pub final_residual: f64,
}

/// Dual scale `c` in `ν = −c∫r` for a depth-D network initialized at scale α.
pub fn dual_scale(depth: u32, alpha: f64) -> f64 {
    if depth == 2 {
        4.0
    } else {
        let d = depth as f64;
        d * (d - 2.0) * alpha.powi(depth as i32 - 2)
    }
}

fn residual_into(x: &Matrix, y: &[f64], beta: &[f64], r: &mut [f64]) {
    r.iter_mut().zip(y).for_each(|(r, y)| *r = -*y);
    accumulate_x(x, beta, r);
}

fn x_into(x: &Matrix, beta: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    accumulate_x(x, beta, out);
}

fn accumulate_x(x: &Matrix, beta: &[f64], r: &mut [f64]) {
    let (n, d) = x.shape();
    for j in 0..d {
        let b = beta[j];
        if b == 0.0 {
            continue;
        }
        let col = x.column(j);
        for i in 0..n {
            r[i] += col[i] * b;
        }
    }
}

fn xt_into(x: &Matrix, r: &[f64], g: &mut [f64]) {
    let (n, d) = x.shape();
    for j in 0..d {
        let col = x.column(j);
        let mut s = 0.0;
        for i in 0..n {
            s += col[i] * r[i];
        }
        g[j] = s;
    }
}

/// Power iterations per step-size bound and safety factor on the result.
const POWER_SWEEPS: usize = 3;
const POWER_SAFETY: f64 = 1.2;

/// Shared driver: the state is `[params (2d), ∫r (N)]`.
struct Driver<'a> {
    data: &'a RegressionDataset,
    config: &'a FlowConfig,
}

struct DriverOutput {
    state: Vec<f64>,
    trace: Vec<TracePoint>,
    converged: bool,
    steps: usize,
    time: f64,
    residual: f64,
}

impl Driver<'_> {
    /// `curvature(s, g, c)` fills the weights `c` of the Gauss–Newton part
    /// `X diag(c) Xᵀ` of the Jacobian and returns a bound on the remainder.
    /// `observe(t, s)` sees the initial state and every accepted state.
    fn run<B, F, K, O>(
        &self,
        state0: Vec<f64>,
        abs_scale: Vec<f64>,
        beta_of: B,
        mut rhs: F,
        curvature: K,
        mut observe: O,
    ) -> Result<DriverOutput>
    where
        B: Fn(&[f64], &mut [f64]),
        F: FnMut(&[f64], &[f64], &mut [f64]),
        K: Fn(&[f64], &[f64], &mut [f64]) -> f64,
        O: FnMut(f64, &[f64]),
    {
        let x = &self.data.design;
        let y = &self.data.targets;
        let (n, d) = x.shape();
        let cfg = self.config;
        let mut beta = vec![0.0; d];
        let mut r = vec![0.0; n];
        let mut g = vec![0.0; d];

        let mut trace = Vec::new();
        let mut converged = false;
        let mut count = 0usize;
        let mut last = f64::INFINITY;
        let mut record = |t: f64, state: &[f64], force: bool, trace: &mut Vec<TracePoint>| -> f64 {
            let mut b = vec![0.0; d];
            let mut rr = vec![0.0; n];
            beta_of(state, &mut b);
            residual_into(x, y, &b, &mut rr);
            let rn = l2_norm(&rr);
            if force || count % cfg.record_every == 0 {
                trace.push(TracePoint {
                    time: t,
                    loss: rn * rn,
                    residual_norm: rn,
                    beta: cfg.record_beta.then_some(b),
                });
            }
            count += 1;
            rn
        };

        let solver = Dopri5 {
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.rel_tol,
            abs_scale: Some(abs_scale),
            max_steps: cfg.max_steps,
            initial_step: None,
            max_step: f64::INFINITY,
        };
        let mut lam_beta = vec![0.0; d];
        let mut lam_r = vec![0.0; n];
        let mut lam_g = vec![0.0; d];
        let mut weights = vec![0.0; d];
        let mut lam_h = vec![0.0; d];
        let mut power = vec![0.0; n];
        let spectral = |s: &[f64]| {
            beta_of(s, &mut lam_beta);
            residual_into(x, y, &lam_beta, &mut lam_r);
            xt_into(x, &lam_r, &mut lam_g);
            let rest = curvature(s, &lam_g, &mut weights);
            let top = power_iteration(&mut power, POWER_SWEEPS, |v, w| {
                xt_into(x, v, &mut lam_h);
                lam_h.iter_mut().zip(&weights).for_each(|(h, c)| *h *= c);
                x_into(x, &lam_h, w);
            });
            POWER_SAFETY * top + rest
        };
        let outcome = solver.solve_with_spectral_bound(
            |_, s, ds| {
                beta_of(s, &mut beta);
                residual_into(x, y, &beta, &mut r);
                xt_into(x, &r, &mut g);
                rhs(s, &g, ds);
                ds[2 * d..].copy_from_slice(&r);
            },
            0.0,
            state0,
            cfg.max_time,
            |t, s| {
                observe(t, s);
                let rn = record(t, s, t == 0.0, &mut trace);
                last = rn;
                if rn <= cfg.residual_tol {
                    converged = true;
                    StepControl::Stop
                } else {
                    StepControl::Continue
                }
            },
            spectral,
        )?;
        if trace.last().map(|p| p.time) != Some(outcome.t) {
            let mut b = vec![0.0; d];
            let mut rr = vec![0.0; n];
            beta_of(&outcome.y, &mut b);
            residual_into(x, y, &b, &mut rr);
            let rn = l2_norm(&rr);
            trace.push(TracePoint { time: outcome.t, loss: rn * rn, residual_norm: rn, beta: cfg.record_beta.then_some(b) });
        }
        if outcome.status == OdeStatus::StepLimit || outcome.status == OdeStatus::Finished {
            converged = last <= cfg.residual_tol;
        }
        Ok(DriverOutput {
            state: outcome.y,
            trace,
            converged,
            steps: outcome.accepted,
            time: outcome.t,
            residual: last,
        })
    }
}

/// Gradient flow of `L = Σ rₙ²` for the depth-D diagonal network started at
/// the unbiased initialization `w₊ = w₋ = α·w0`.
pub fn integrate_diagonal_flow(
    data: &RegressionDataset,
    depth: u32,
    alpha: f64,
    shape: &[f64],
    config: &FlowConfig,
) -> Result<FlowResult> {
    check_scale(alpha, shape)?;
    if shape.len() != data.d() {
        return param(format!("shape has length {}, expected {}", shape.len(), data.d()));
    }
    let net = DiagonalNetwork::new(depth, alpha, shape.to_vec())?;
    integrate_diagonal_flow_from(data, &net, config)
}

/// As [`integrate_diagonal_flow`] but from an arbitrary state of `net`.
///
/// Dynamics: `ẇ₊ = −D(Xᵀr)∘w₊^{D−1}`, `ẇ₋ = +D(Xᵀr)∘w₋^{D−1}`.
pub fn integrate_diagonal_flow_from(data: &RegressionDataset, net: &DiagonalNetwork, config: &FlowConfig) -> Result<FlowResult> {
    config.validate()?;
    let d = data.d();
    let n = data.n();
    if net.dim() != d {
        return param(format!("network has dimension {}, data has {d}", net.dim()));
    }
    let depth = net.depth;
    let p = depth as i32;
    let df = depth as f64;
    let mut state0 = Vec::with_capacity(2 * d + n);
    state0.extend_from_slice(&net.w_plus);
    state0.extend_from_slice(&net.w_minus);
    state0.extend(std::iter::repeat_n(0.0, n));
    let mut abs_scale: Vec<f64> = state0[..2 * d].iter().map(|w| w.abs().max(1e-300)).collect();
    abs_scale.extend(std::iter::repeat_n(1.0, n));

    let beta_of = move |s: &[f64], beta: &mut [f64]| {
        for i in 0..d {
            beta[i] = s[i].powi(p) - s[d + i].powi(p);
        }
    };
    let rhs = move |s: &[f64], g: &[f64], ds: &mut [f64]| {
        for i in 0..d {
            ds[i] = -df * g[i] * s[i].powi(p - 1);
            ds[d + i] = df * g[i] * s[d + i].powi(p - 1);
        }
    };
    let curvature = move |s: &[f64], g: &[f64], c: &mut [f64]| {
        let mut rest: f64 = 0.0;
        for i in 0..d {
            let (a, b) = (s[i].abs(), s[d + i].abs());
            c[i] = df * df * (a.powi(2 * p - 2) + b.powi(2 * p - 2));
            rest = rest.max(df * (df - 1.0) * g[i].abs() * a.max(b).powi(p - 2));
        }
        rest
    };
    let out = Driver { data, config }.run(state0, abs_scale, beta_of, rhs, curvature, |_, _| {})?;
    let w_plus = out.state[..d].to_vec();
    let w_minus = out.state[d..2 * d].to_vec();
    let integral = out.state[2 * d..].to_vec();
    let model = DiagonalNetwork::with_weights(depth, net.alpha, net.shape.clone(), w_plus, w_minus)?;
    let beta_inf = model.predictor();
    let c = dual_scale(depth, net.alpha);
    Ok(FlowResult {
        final_model: FlowModel::Diagonal(model),
        beta_inf,
        dual_nu: integral.iter().map(|v| -c * v).collect(),
        residual_integral: integral,
        residual_trace: out.trace,
        converged: out.converged,
        steps: out.steps,
        final_time: out.time,
        final_residual: out.residual,
    })
}

/// Gradient flow `u̇ = −2(Xᵀr)∘v`, `v̇ = −2(Xᵀr)∘u` for the predictor `u∘v`.
pub fn integrate_uv_flow(data: &RegressionDataset, u0: &[f64], v0: &[f64], config: &FlowConfig) -> Result<FlowResult> {
    integrate_uv_flow_observed(data, u0, v0, config, |_, _, _| {})
}

/// As [`integrate_uv_flow`], calling `observe(t, u, v)` at `t = 0` and at every accepted step.
pub fn integrate_uv_flow_observed<O>(
    data: &RegressionDataset,
    u0: &[f64],
    v0: &[f64],
    config: &FlowConfig,
    mut observe: O,
) -> Result<FlowResult>
where
    O: FnMut(f64, &[f64], &[f64]),
{
    config.validate()?;
    let d = data.d();
    let n = data.n();
    if u0.len() != d || v0.len() != d {
        return param("u0 and v0 must match the data dimension");
    }
    let mut state0 = Vec::with_capacity(2 * d + n);
    state0.extend_from_slice(u0);
    state0.extend_from_slice(v0);
    state0.extend(std::iter::repeat_n(0.0, n));
    let floor = state0[..2 * d].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut abs_scale: Vec<f64> = state0[..2 * d].iter().map(|w| if *w == 0.0 { floor } else { w.abs() }).collect();
    abs_scale.extend(std::iter::repeat_n(1.0, n));

    let beta_of = move |s: &[f64], beta: &mut [f64]| {
        for i in 0..d {
            beta[i] = s[i] * s[d + i];
        }
    };
    let rhs = move |s: &[f64], g: &[f64], ds: &mut [f64]| {
        for i in 0..d {
            ds[i] = -2.0 * g[i] * s[d + i];
            ds[d + i] = -2.0 * g[i] * s[i];
        }
    };
    let curvature = move |s: &[f64], g: &[f64], c: &mut [f64]| {
        for i in 0..d {
            c[i] = 2.0 * (s[i] * s[i] + s[d + i] * s[d + i]);
        }
        2.0 * inf_norm(g)
    };
    let observer = |t: f64, s: &[f64]| observe(t, &s[..d], &s[d..2 * d]);
    let out = Driver { data, config }.run(state0, abs_scale, beta_of, rhs, curvature, observer)?;
    let model = UVNetwork::new(out.state[..d].to_vec(), out.state[d..2 * d].to_vec())?;
    let beta_inf = model.predictor();
    let integral = out.state[2 * d..].to_vec();
    Ok(FlowResult {
        final_model: FlowModel::UV(model),
        beta_inf,
        dual_nu: integral.iter().map(|v| -4.0 * v).collect(),
        residual_integral: integral,
        residual_trace: out.trace,
        converged: out.converged,
        steps: out.steps,
        final_time: out.time,
        final_residual: out.residual,
    })
}

/// `‖β∞ − b(Xᵀν)‖∞` where `b` is the closed-form map from the accumulated dual:
/// `2α²w0²∘sinh(·)` at depth 2 and `α^D h_D(·)` at depth D ≥ 3 (unit shape).
pub fn closed_form_check(result: &FlowResult, data: &RegressionDataset, alpha: f64, shape: &[f64]) -> Result<f64> {
    let FlowModel::Diagonal(net) = &result.final_model else {
        return param("closed form applies to diagonal networks only");
    };
    check_scale(alpha, shape)?;
    let z = data.design.tr_mul(&crate::linalg::Vector::from_column_slice(&result.dual_nu));
    let mut worst: f64 = 0.0;
    if net.depth == 2 {
        for i in 0..data.d() {
            let pred = 2.0 * alpha * alpha * shape[i] * shape[i] * z[i].sinh();
            worst = worst.max((result.beta_inf[i] - pred).abs());
        }
    } else {
        if shape.iter().any(|&s| s != 1.0) {
            return param("the depth-D closed form needs a unit shape");
        }
        let c = alpha.powi(net.depth as i32);
        for i in 0..data.d() {
            let pred = c * h_d(z[i], net.depth)?;
            worst = worst.max((result.beta_inf[i] - pred).abs());
        }
    }
    Ok(worst)
}

/// `(‖Xᵀ∫r‖∞, α^{2−D}/(D(D−2)))`; the first never exceeds the second.
pub fn lemma1_bound_check(result: &FlowResult, data: &RegressionDataset, alpha: f64) -> Result<(f64, f64)> {
    let FlowModel::Diagonal(net) = &result.final_model else {
        return param("bound applies to diagonal networks only");
    };
    if net.depth < 3 {
        return param("bound applies to depth ≥ 3");
    }
    let g = data.design.tr_mul(&crate::linalg::Vector::from_column_slice(&result.residual_integral));
    let d = net.depth as f64;
    Ok((inf_norm(g.as_slice()), alpha.powf(2.0 - d) / (d * (d - 2.0))))
}

/// Write the trace as `time,loss,residual_norm[,beta_1,…]`.
pub fn write_trace_csv(path: &Path, trace: &[TracePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let width = trace.iter().find_map(|p| p.beta.as_ref().map(|b| b.len())).unwrap_or(0);
    let mut header = vec!["time".to_string(), "loss".into(), "residual_norm".into()];
    header.extend((1..=width).map(|j| format!("beta_{j}")));
    w.write_record(&header)?;
    for p in trace {
        let mut rec = vec![fmt_f64(p.time), fmt_f64(p.loss), fmt_f64(p.residual_norm)];
        if let Some(b) = &p.beta {
            rec.extend(b.iter().map(|v| fmt_f64(*v)));
        } else if width > 0 {
            return Err(Error::Parameter("trace mixes points with and without beta".into()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_sparse_regression;
    use crate::rng::SeededRng;

    fn cfg() -> FlowConfig {
        FlowConfig { rel_tol: 1e-10, residual_tol: 1e-10, ..Default::default() }
    }

    #[test]
    fn single_measurement_depth2() {
        let data = RegressionDataset::from_rows(&[vec![1.0, 0.0]], vec![1.0]).unwrap();
        let res = integrate_diagonal_flow(&data, 2, 0.5, &[1.0, 1.0], &cfg()).unwrap();
        assert!(res.converged);
        assert!((res.beta_inf[0] - 1.0).abs() < 1e-6);
        assert!(res.beta_inf[1].abs() < 1e-12);
    }

    #[test]
    fn zero_targets_do_not_move() {
        let mut ds = generate_sparse_regression(5, 3, 2, 0.0, 3).unwrap();
        ds.targets = vec![0.0; 3];
        let res = integrate_diagonal_flow(&ds, 2, 0.7, &[1.0; 5], &cfg()).unwrap();
        assert_eq!(res.steps, 0);
        assert!(res.converged);
        assert_eq!(res.beta_inf, vec![0.0; 5]);
        assert_eq!(closed_form_check(&res, &ds, 0.7, &[1.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_self_consistency() {
        let ds = generate_sparse_regression(10, 5, 3, 0.0, 17).unwrap();
        let res = integrate_diagonal_flow(&ds, 2, 1.0, &[1.0; 10], &cfg()).unwrap();
        assert!(res.converged);
        assert!(closed_form_check(&res, &ds, 1.0, &[1.0; 10]).unwrap() <= 1e-6);

        let shape: Vec<f64> = (0..10).map(|i| 0.5 + 0.1 * i as f64).collect();
        let res = integrate_diagonal_flow(&ds, 2, 0.4, &shape, &cfg()).unwrap();
        assert!(closed_form_check(&res, &ds, 0.4, &shape).unwrap() <= 1e-6);
    }

    #[test]
    fn depth3_closed_form_and_bound() {
        let ds = generate_sparse_regression(8, 4, 2, 0.0, 5).unwrap();
        let alpha = 0.3;
        let res = integrate_diagonal_flow(&ds, 3, alpha, &[1.0; 8], &cfg()).unwrap();
        assert!(res.converged);
        assert!(closed_form_check(&res, &ds, alpha, &[1.0; 8]).unwrap() <= 1e-6);
        let (g, bound) = lemma1_bound_check(&res, &ds, alpha).unwrap();
        assert!(g <= bound, "{g} > {bound}");
    }

    #[test]
    fn loss_nonincreasing_and_weights_positive() {
        let ds = generate_sparse_regression(12, 6, 3, 0.05, 8).unwrap();
        for depth in [2u32, 3, 4] {
            let c = FlowConfig { record_beta: false, ..cfg() };
            let res = integrate_diagonal_flow(&ds, depth, 0.2, &[1.0; 12], &c).unwrap();
            for w in res.residual_trace.windows(2) {
                assert!(w[1].loss <= w[0].loss * (1.0 + 1e-7) + 1e-14, "depth {depth}");
            }
            let FlowModel::Diagonal(net) = &res.final_model else { unreachable!() };
            assert!(net.w_plus.iter().chain(&net.w_minus).all(|&w| w >= -1e-12));
        }
    }

    #[test]
    fn dual_lies_in_row_space() {
        let ds = generate_sparse_regression(15, 6, 2, 0.0, 21).unwrap();
        let (alpha, shape) = (0.3, vec![1.0; 15]);
        let res = integrate_diagonal_flow(&ds, 2, alpha, &shape, &cfg()).unwrap();
        let z: Vec<f64> = res.beta_inf.iter().map(|b| crate::regularizers::asinh(b / (2.0 * alpha * alpha))).collect();
        let x = &ds.design;
        let zv = crate::linalg::Vector::from_vec(z);
        let coef = crate::linalg::spd_solve(&(x * x.transpose()), &(x * &zv)).unwrap();
        let proj = x.transpose() * coef;
        assert!((&zv - proj).norm() <= 1e-5 * zv.norm());
    }

    #[test]
    fn escape_time_grows_as_alpha_shrinks() {
        let ds = generate_sparse_regression(10, 5, 2, 0.0, 4).unwrap();
        let times: Vec<f64> = [1.0, 0.1, 0.01]
            .iter()
            .map(|&a| integrate_diagonal_flow(&ds, 2, a, &[1.0; 10], &cfg()).unwrap().final_time)
            .collect();
        assert!(times[0] <= times[1] && times[1] <= times[2], "{times:?}");
    }

    #[test]
    fn uv_balanced_start_matches_one_sided_diagonal() {
        // β ≥ 0 planted instance; (u, v) = (α1, α1) follows w₊ with w₋ ≡ 0.
        let ds = generate_sparse_regression(6, 3, 2, 0.0, 12).unwrap();
        let alpha = 0.5;
        let c = FlowConfig { record_beta: true, ..cfg() };
        let uv = integrate_uv_flow(&ds, &[alpha; 6], &[alpha; 6], &c).unwrap();
        let net = DiagonalNetwork::with_weights(2, alpha, vec![1.0; 6], vec![alpha; 6], vec![0.0; 6]).unwrap();
        let diag = integrate_diagonal_flow_from(&ds, &net, &c).unwrap();
        assert!(uv.converged && diag.converged);
        for (a, b) in uv.beta_inf.iter().zip(&diag.beta_inf) {
            assert!((a - b).abs() < 1e-7);
        }
        // Same state at a fixed intermediate time.
        let early = FlowConfig { max_time: 0.7, residual_tol: 1e-300, ..cfg() };
        let uv = integrate_uv_flow(&ds, &[alpha; 6], &[alpha; 6], &early).unwrap();
        let diag = integrate_diagonal_flow_from(&ds, &net, &early).unwrap();
        assert_eq!(uv.final_time, 0.7);
        assert_eq!(diag.final_time, 0.7);
        for (a, b) in uv.beta_inf.iter().zip(&diag.beta_inf) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn uv_preserves_magnitudes_and_signs() {
        let mut rng = SeededRng::new(9);
        let ds = generate_sparse_regression(8, 4, 3, 0.0, 2).unwrap();
        let u0: Vec<f64> = (0..8).map(|_| rng.normal() * 0.3).collect();
        let v0: Vec<f64> = u0.iter().map(|u| if rng.uniform() < 0.5 { -u } else { *u }).collect();
        let res = integrate_uv_flow(&ds, &u0, &v0, &FlowConfig { record_beta: false, ..cfg() }).unwrap();
        let FlowModel::UV(m) = &res.final_model else { unreachable!() };
        for i in 0..8 {
            assert!((m.u[i].abs() - m.v[i].abs()).abs() <= 1e-8);
            assert_eq!(m.u[i].signum(), u0[i].signum());
        }
    }

    #[test]
    fn observer_sees_start_and_every_accepted_step() {
        let ds = generate_sparse_regression(5, 3, 2, 0.0, 4).unwrap();
        let (mut calls, mut last) = (0usize, -1.0);
        let res = integrate_uv_flow_observed(&ds, &[0.4; 5], &[0.4; 5], &cfg(), |t, u, v| {
            assert!(t > last && u.len() == 5 && v.len() == 5);
            last = t;
            calls += 1;
        })
        .unwrap();
        assert_eq!(calls, res.steps + 1);
        assert_eq!(last, res.final_time);
    }

    #[test]
    fn trace_csv_has_beta_columns() {
        let ds = generate_sparse_regression(3, 2, 1, 0.0, 1).unwrap();
        let c = FlowConfig { record_beta: true, record_every: 5, ..cfg() };
        let res = integrate_diagonal_flow(&ds, 2, 1.0, &[1.0; 3], &c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trace_csv(&p, &res.residual_trace).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("time,loss,residual_norm,beta_1,beta_2,beta_3"));
    }
}
