//! Gradient flow `U̇ = −2GV`, `V̇ = −2GᵀU` with `G = Σₙ rₙXₙ` on `L = Σ rₙ²`.

use crate::error::{param, Error, Result};
use crate::flow::{FlowConfig, TracePoint};
use crate::linalg::{l2_norm, power_iteration, Matrix};
use crate::ode::{Dopri5, OdeStatus, StepControl};

use super::{FactorizationModel, MeasurementKind, MeasurementSet};

const POWER_SWEEPS: usize = 3;
const POWER_SAFETY: f64 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorizationMode {
    /// Adaptive Runge–Kutta integration of the flow.
    Flow,
    /// Plain gradient descent with a fixed stepsize; `max_steps` caps iterations.
    GradientDescent { step: f64 },
}

#[derive(Clone, Debug)]
pub struct FactorizationResult {
    pub final_model: FactorizationModel,
    pub trace: Vec<TracePoint>,
    /// `∫₀ᵀ r(s) ds`; a Riemann sum in gradient-descent mode.
    pub residual_integral: Vec<f64>,
    pub converged: bool,
    pub steps: usize,
    pub final_time: f64,
    pub final_residual: f64,
}

fn check_inputs(meas: &MeasurementSet, targets: &[f64], model: &FactorizationModel) -> Result<()> {
    if targets.len() != meas.len() {
        return param(format!("{} targets for {} measurements", targets.len(), meas.len()));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return param("targets must be finite");
    }
    if model.dim() != meas.dim() {
        return param(format!("model dimension {} differs from measurement dimension {}", model.dim(), meas.dim()));
    }
    Ok(())
}

fn residual(meas: &MeasurementSet, targets: &[f64], u: &Matrix, v: &Matrix) -> Vec<f64> {
    let mut r = meas.measure_product(u, v);
    r.iter_mut().zip(targets).for_each(|(r, y)| *r -= y);
    r
}

/// `(U̇, V̇) = (−2GV, −2GᵀU)`, the negative gradient of `Σ rₙ²`.
pub fn factorization_gradient(
    meas: &MeasurementSet,
    targets: &[f64],
    model: &FactorizationModel,
) -> Result<(Matrix, Matrix)> {
    check_inputs(meas, targets, model)?;
    let r = residual(meas, targets, &model.u, &model.v);
    let g = meas.combine(&r);
    Ok((&g * &model.v * -2.0, g.tr_mul(&model.u) * -2.0))
}

pub fn integrate_factorization_flow(
    meas: &MeasurementSet,
    targets: &[f64],
    model: &FactorizationModel,
    config: &FlowConfig,
    mode: FactorizationMode,
) -> Result<FactorizationResult> {
    run_factorization(meas, targets, model, config, mode, |_, _| {})
}

/// As [`integrate_factorization_flow`]; `observer(t, state)` sees every
/// accepted state `[vec U, vec V, ∫r]` (column-major blocks).
pub(crate) fn run_factorization<O>(
    meas: &MeasurementSet,
    targets: &[f64],
    model: &FactorizationModel,
    config: &FlowConfig,
    mode: FactorizationMode,
    mut observer: O,
) -> Result<FactorizationResult>
where
    O: FnMut(f64, &[f64]),
{
    config.validate()?;
    check_inputs(meas, targets, model)?;
    let (d, k) = model.u.shape();
    let dk = d * k;
    let n = meas.len();
    let mut state0 = Vec::with_capacity(2 * dk + n);
    state0.extend_from_slice(model.u.as_slice());
    state0.extend_from_slice(model.v.as_slice());
    state0.extend(std::iter::repeat_n(0.0, n));
    let unpack = |s: &[f64]| (Matrix::from_column_slice(d, k, &s[..dk]), Matrix::from_column_slice(d, k, &s[dk..2 * dk]));

    let mut trace = Vec::new();
    let mut count = 0usize;
    let mut record = |t: f64, rn: f64, force: bool, trace: &mut Vec<TracePoint>| {
        if force || count % config.record_every == 0 {
            trace.push(TracePoint { time: t, loss: rn * rn, residual_norm: rn, beta: None });
        }
        count += 1;
    };

    let (state, steps, time, last, converged) = match mode {
        FactorizationMode::GradientDescent { step } => {
            if !(step > 0.0 && step.is_finite()) {
                return param(format!("stepsize must be positive, got {step}"));
            }
            let (mut u, mut v) = (model.u.clone(), model.v.clone());
            let mut integral = vec![0.0; n];
            let mut it = 0usize;
            let mut rn;
            loop {
                let r = residual(meas, targets, &u, &v);
                rn = l2_norm(&r);
                if !rn.is_finite() {
                    let mut s = u.as_slice().to_vec();
                    s.extend_from_slice(v.as_slice());
                    s.extend_from_slice(&integral);
                    return Err(Error::Diverged { message: "gradient descent produced non-finite residuals".into(), time: it as f64 * step, state: s });
                }
                record(it as f64 * step, rn, it == 0, &mut trace);
                if rn <= config.residual_tol || it >= config.max_steps {
                    break;
                }
                let g = meas.combine(&r);
                let du = &g * &v;
                let dv = g.tr_mul(&u);
                u -= &du * (2.0 * step);
                v -= &dv * (2.0 * step);
                integral.iter_mut().zip(&r).for_each(|(a, r)| *a += step * r);
                it += 1;
                let mut s = u.as_slice().to_vec();
                s.extend_from_slice(v.as_slice());
                s.extend_from_slice(&integral);
                observer(it as f64 * step, &s);
            }
            let mut s = u.as_slice().to_vec();
            s.extend_from_slice(v.as_slice());
            s.extend_from_slice(&integral);
            (s, it, it as f64 * step, rn, rn <= config.residual_tol)
        }
        FactorizationMode::Flow => {
            let scale = model.u.amax().max(model.v.amax()).max(1e-300);
            let mut abs_scale = vec![scale; 2 * dk];
            abs_scale.extend(std::iter::repeat_n(1.0, n));
            let solver = Dopri5 {
                rel_tol: config.rel_tol,
                abs_tol: config.rel_tol,
                abs_scale: Some(abs_scale),
                max_steps: config.max_steps,
                initial_step: None,
                max_step: f64::INFINITY,
            };
            let mut power = vec![0.0; n];
            let mut last = f64::INFINITY;
            let mut converged = false;
            let outcome = solver.solve_with_spectral_bound(
                |_, s, ds| {
                    let (u, v) = unpack(s);
                    let r = residual(meas, targets, &u, &v);
                    let g = meas.combine(&r);
                    let du = &g * &v * -2.0;
                    let dv = g.tr_mul(&u) * -2.0;
                    ds[..dk].copy_from_slice(du.as_slice());
                    ds[dk..2 * dk].copy_from_slice(dv.as_slice());
                    ds[2 * dk..].copy_from_slice(&r);
                },
                0.0,
                state0,
                config.max_time,
                |t, s| {
                    let (u, v) = unpack(s);
                    let rn = l2_norm(&residual(meas, targets, &u, &v));
                    record(t, rn, t == 0.0, &mut trace);
                    observer(t, s);
                    last = rn;
                    if rn <= config.residual_tol {
                        converged = true;
                        StepControl::Stop
                    } else {
                        StepControl::Continue
                    }
                },
                |s| {
                    // Gauss–Newton part 2JJᵀ by power iteration, plus 2‖G‖ for the rest.
                    let (u, v) = unpack(s);
                    let r = residual(meas, targets, &u, &v);
                    let rest = 2.0 * meas.combine(&r).norm();
                    let top = power_iteration(&mut power, POWER_SWEEPS, |c, w| {
                        let g = meas.combine(c);
                        let du = &g * &v;
                        let dv = g.tr_mul(&u);
                        let a = meas.measure_product(&du, &v);
                        let b = meas.measure_product(&u, &dv);
                        w.iter_mut().zip(a.iter().zip(&b)).for_each(|(w, (a, b))| *w = a + b);
                    });
                    2.0 * POWER_SAFETY * top + rest
                },
            )?;
            if outcome.status != OdeStatus::Stopped {
                converged = last <= config.residual_tol;
            }
            (outcome.y, outcome.accepted, outcome.t, last, converged)
        }
    };
    if trace.last().map(|p| p.time) != Some(time) {
        trace.push(TracePoint { time, loss: last * last, residual_norm: last, beta: None });
    }
    let (u, v) = unpack(&state);
    Ok(FactorizationResult {
        final_model: FactorizationModel::new(u, v)?,
        trace,
        residual_integral: state[2 * dk..].to_vec(),
        converged,
        steps,
        final_time: time,
        final_residual: last,
    })
}

/// Integrate `d/dt M̄ = −4(X̄(r)M̄ + M̄X̄(r))` with `X̄(r) = Σ rₙX̄ₙ` and
/// `rₙ = ⟨M̄, X̄ₙ⟩ − yₙ` directly on the lifted matrix, up to `t_end`.
pub fn integrate_lifted_flow(
    meas: &MeasurementSet,
    targets: &[f64],
    lifted0: &Matrix,
    t_end: f64,
    rel_tol: f64,
) -> Result<Matrix> {
    let d = meas.dim();
    if lifted0.shape() != (2 * d, 2 * d) {
        return param(format!("lifted matrix must be {0}×{0}", 2 * d));
    }
    if targets.len() != meas.len() {
        return param("one target per measurement is required");
    }
    if !(t_end >= 0.0 && rel_tol > 0.0) {
        return param("t_end must be non-negative and rel_tol positive");
    }
    let m = 2 * d;
    let scale = lifted0.amax().max(1e-300);
    let solver = Dopri5 {
        rel_tol,
        abs_tol: rel_tol * scale,
        max_steps: 10_000_000,
        ..Default::default()
    };
    let lifted_combine = |r: &[f64]| {
        let g = meas.combine(r) * 0.5;
        let mut out = Matrix::zeros(m, m);
        out.view_mut((0, d), (d, d)).copy_from(&g);
        out.view_mut((d, 0), (d, d)).copy_from(&g.transpose());
        out
    };
    let out = solver.solve(
        |_, s, ds| {
            let mbar = Matrix::from_column_slice(m, m, s);
            let mut r = meas.measure(&mbar.view((0, d), (d, d)).into_owned());
            r.iter_mut().zip(targets).for_each(|(r, y)| *r -= y);
            let xr = lifted_combine(&r);
            let dm = (&xr * &mbar + &mbar * &xr) * -4.0;
            ds.copy_from_slice(dm.as_slice());
        },
        0.0,
        lifted0.as_slice().to_vec(),
        t_end,
        |_, _| StepControl::Continue,
    )?;
    if out.status != OdeStatus::Finished {
        return Err(Error::Numerical(format!("lifted flow stopped early at t = {}", out.t)));
    }
    Ok(Matrix::from_column_slice(m, m, &out.y))
}

/// `max |δ − 2μ² sinh z|, |Δ − 2μ² cosh z|` with `z = −4𝒳ᵀ∫r`,
/// `δ = diag(UVᵀ)` and `Δ = ½diag(UUᵀ + VVᵀ)`, from the lifted-identity start.
pub fn diagonal_closed_form_gap(
    meas: &MeasurementSet,
    model: &FactorizationModel,
    residual_integral: &[f64],
    mu: f64,
) -> Result<f64> {
    if meas.kind() != MeasurementKind::Diagonal {
        return param("the closed form needs diagonal measurements");
    }
    if residual_integral.len() != meas.len() || model.dim() != meas.dim() {
        return param("dimension mismatch");
    }
    let x = meas.diagonal_design();
    let z = x.tr_mul(&crate::linalg::Vector::from_column_slice(residual_integral)) * -4.0;
    let c = 2.0 * mu * mu;
    let mut worst: f64 = 0.0;
    for i in 0..meas.dim() {
        let delta = model.u.row(i).dot(&model.v.row(i));
        let big = 0.5 * (model.u.row(i).norm_squared() + model.v.row(i).norm_squared());
        worst = worst.max((delta - c * z[i].sinh()).abs()).max((big - c * z[i].cosh()).abs());
    }
    Ok(worst)
}
