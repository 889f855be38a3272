//! Tangent-kernel linearization of the lifted factorization model and the
//! kernel-regime deviation bounds.
//!
//! With `W = [U; V]` the flow reads `Ẇ = −4X̄(r)W`. Linearizing the lifted
//! predictor `⟨WWᵀ, X̄ₙ⟩` at `W0` gives the features `2X̄ₙW0`, residual
//! dynamics `ṙ = −Kr` with `K_nm = 8⟨X̄ₙW0, X̄ₘW0⟩`, and parameters
//! `W_TK(t) = W0 − 4Σₘ X̄ₘW0 (∫r)ₘ`. Time runs twice as fast as in the
//! `ẏ = −Σ(y − y*)`, `Σ = 4⟨X̄ₙW0, X̄ₘW0⟩` convention; suprema over time are
//! unaffected.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::flow::{FlowConfig, TracePoint};
use crate::linalg::{l2_norm, sym_eigen_sorted, sym_extreme_eigenvalues, Matrix, Vector};

use super::flow::run_factorization;
use super::{FactorizationMode, FactorizationModel, MeasurementSet};

/// Constants entering the kernel-regime bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelRegimeBoundInputs {
    /// λ with `λI ⪯ 𝒳𝒳ᵀ` for the lifted measurements.
    pub lambda_min: f64,
    /// Λ with `𝒳𝒳ᵀ ⪯ ΛI`.
    pub lambda_max: f64,
    /// `‖W0W0ᵀ − μI‖_op`.
    pub gamma: f64,
    pub mu: f64,
    /// `Y ≥ ‖y*‖`.
    pub y_bound: f64,
}

impl KernelRegimeBoundInputs {
    /// λ, Λ from the lifted Gram; μ, γ as the center and half-width of the
    /// spectrum of `W0W0ᵀ`, which minimizes `‖W0W0ᵀ − μI‖_op` over μ.
    pub fn measure(meas: &MeasurementSet, targets: &[f64], model0: &FactorizationModel) -> Result<Self> {
        if targets.len() != meas.len() || model0.dim() != meas.dim() {
            return param("dimension mismatch");
        }
        let (lambda_min, lambda_max) = sym_extreme_eigenvalues(&meas.lifted_gram());
        let (lo, hi) = sym_extreme_eigenvalues(&model0.lifted());
        Ok(Self {
            lambda_min: lambda_min.max(0.0),
            lambda_max,
            gamma: 0.5 * (hi - lo),
            mu: 0.5 * (hi + lo),
            y_bound: l2_norm(targets),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda_max && self.lambda_max.is_finite()) {
            return param(format!("need 0 < λ ≤ Λ, got λ = {}, Λ = {}", self.lambda_min, self.lambda_max));
        }
        if !(self.gamma >= 0.0 && self.mu > 0.0 && self.y_bound >= 0.0) {
            return param("need γ ≥ 0, μ > 0 and Y ≥ 0");
        }
        Ok(())
    }

    /// `μ > 4Λγ/λ`.
    pub fn mu_condition(&self) -> bool {
        self.mu > 4.0 * self.lambda_max * self.gamma / self.lambda_min
    }

    /// Largest `‖y(0) − y*‖` covered: `(μλ/√Λ)(1 − √((1 + γ/μ)/(1 + λ/4Λ)))`.
    pub fn residual_limit(&self) -> f64 {
        let (l, big) = (self.lambda_min, self.lambda_max);
        let ratio = (1.0 + self.gamma / self.mu) / (1.0 + l / (4.0 * big));
        self.mu * l / big.sqrt() * (1.0 - ratio.sqrt())
    }

    pub fn applicable(&self, initial_residual: f64) -> bool {
        self.validate().is_ok() && self.mu_condition() && initial_residual <= self.residual_limit()
    }
}

/// `(√(Λ + λ/4)‖r0‖/(λ√μ),  Λ√(1 + λ/4Λ)‖r0‖²/(λ²μ^{3/2}) + 2√Λ√(1 + γ/μ)‖r0‖/(λ√μ))`:
/// bounds on the parameter drift and on the distance to the tangent-kernel path.
pub fn closed_form_bounds(inputs: &KernelRegimeBoundInputs, initial_residual: f64) -> (f64, f64) {
    let KernelRegimeBoundInputs { lambda_min: l, lambda_max: big, gamma, mu, .. } = *inputs;
    let r = initial_residual;
    let drift = (big + l / 4.0).sqrt() * r / (l * mu.sqrt());
    let tk = big * (1.0 + l / (4.0 * big)).sqrt() * r * r / (l * l * mu.powf(1.5))
        + 2.0 * big.sqrt() * (1.0 + gamma / mu).sqrt() * r / (l * mu.sqrt());
    (drift, tk)
}

/// Closed-form gradient flow on the model linearized at `W0`.
#[derive(Clone, Debug)]
pub struct TangentKernelFlow {
    w0: Matrix,
    /// `X̄ₙW0`, each 2d×k.
    features: Vec<Matrix>,
    kernel: Matrix,
    eigenvalues: Vector,
    eigenvectors: Matrix,
    /// `Qᵀr(0)`.
    coeffs: Vector,
    targets: Vec<f64>,
}

impl TangentKernelFlow {
    pub fn new(meas: &MeasurementSet, targets: &[f64], model0: &FactorizationModel) -> Result<Self> {
        if targets.len() != meas.len() || model0.dim() != meas.dim() {
            return param("dimension mismatch");
        }
        let w0 = model0.stacked();
        let features: Vec<Matrix> = (0..meas.len()).map(|n| meas.lifted(n) * &w0).collect();
        let n = features.len();
        let kernel = Matrix::from_fn(n, n, |a, b| 8.0 * features[a].dot(&features[b]));
        let (mut eigenvalues, eigenvectors) = sym_eigen_sorted(&kernel);
        let top = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        eigenvalues.iter_mut().for_each(|v| {
            if *v <= top * 1e-13 {
                *v = 0.0;
            }
        });
        let mut r0 = meas.measure_product(&model0.u, &model0.v);
        r0.iter_mut().zip(targets).for_each(|(r, y)| *r -= y);
        let coeffs = eigenvectors.tr_mul(&Vector::from_vec(r0));
        Ok(Self { w0, features, kernel, eigenvalues, eigenvectors, coeffs, targets: targets.to_vec() })
    }

    pub fn kernel(&self) -> &Matrix {
        &self.kernel
    }

    /// Eigenvalues of the kernel, ascending, with numerical zeros clamped.
    pub fn kernel_spectrum(&self) -> &Vector {
        &self.eigenvalues
    }

    fn in_kernel_basis(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let scaled = Vector::from_iterator(self.coeffs.len(), self.coeffs.iter().zip(self.eigenvalues.iter()).map(|(c, &k)| c * f(k)));
        (&self.eigenvectors * scaled).as_slice().to_vec()
    }

    /// `r_TK(t) = e^{−Kt} r(0)`.
    pub fn residual(&self, t: f64) -> Vec<f64> {
        self.in_kernel_basis(|k| (-k * t).exp())
    }

    /// `∫₀ᵗ r_TK`; `t = ∞` is allowed when `r(0)` has no component in the
    /// null space of `K`.
    pub fn residual_integral(&self, t: f64) -> Vec<f64> {
        self.in_kernel_basis(|k| {
            if k == 0.0 {
                if t.is_infinite() {
                    0.0
                } else {
                    t
                }
            } else if t.is_infinite() {
                1.0 / k
            } else {
                -(-k * t).exp_m1() / k
            }
        })
    }

    /// Whether the linearized model reaches zero loss.
    pub fn interpolates(&self) -> bool {
        let scale = self.coeffs.norm().max(f64::MIN_POSITIVE);
        self.coeffs.iter().zip(self.eigenvalues.iter()).all(|(c, &k)| k > 0.0 || c.abs() <= 1e-12 * scale)
    }

    pub fn predictions(&self, t: f64) -> Vec<f64> {
        let mut p = self.residual(t);
        p.iter_mut().zip(&self.targets).for_each(|(p, y)| *p += y);
        p
    }

    /// `W_TK(t)` stacked as 2d×k.
    pub fn params(&self, t: f64) -> Matrix {
        let integral = self.residual_integral(t);
        let mut w = self.w0.clone();
        for (phi, &a) in self.features.iter().zip(&integral) {
            w -= phi * (4.0 * a);
        }
        w
    }
}

#[derive(Clone, Debug)]
pub struct TangentKernelResult {
    pub flow: TangentKernelFlow,
    pub final_params: FactorizationModel,
    pub final_time: f64,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

/// Number of log-spaced trace points of the linearized flow.
const TK_TRACE_POINTS: usize = 200;

/// Runs the linearized flow until `‖r_TK‖ ≤ residual_tol` or `max_time`.
pub fn integrate_tangent_kernel_flow(
    meas: &MeasurementSet,
    targets: &[f64],
    model0: &FactorizationModel,
    config: &FlowConfig,
) -> Result<TangentKernelResult> {
    config.validate()?;
    let flow = TangentKernelFlow::new(meas, targets, model0)?;
    let rn = |t: f64| l2_norm(&flow.residual(t));
    let (end, converged) = if rn(0.0) <= config.residual_tol {
        (0.0, true)
    } else if rn(config.max_time) > config.residual_tol {
        (config.max_time, false)
    } else {
        // The residual norm is nonincreasing since K ⪰ 0.
        let mut hi = (1.0 / flow.eigenvalues.max().max(f64::MIN_POSITIVE)).min(config.max_time);
        while rn(hi) > config.residual_tol {
            hi = (hi * 2.0).min(config.max_time);
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rn(mid) > config.residual_tol {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        (hi, true)
    };
    let mut trace = vec![tk_point(&flow, 0.0)];
    if end > 0.0 {
        let first = end * 1e-6;
        for i in 0..TK_TRACE_POINTS {
            let t = first * (end / first).powf(i as f64 / (TK_TRACE_POINTS - 1) as f64);
            trace.push(tk_point(&flow, t));
        }
    }
    let final_params = FactorizationModel::from_stacked(&flow.params(end))?;
    Ok(TangentKernelResult { flow, final_params, final_time: end, converged, trace })
}

fn tk_point(flow: &TangentKernelFlow, t: f64) -> TracePoint {
    let r = l2_norm(&flow.residual(t));
    TracePoint { time: t, loss: r * r, residual_norm: r, beta: None }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviationReport {
    /// `sup_t ‖W(t) − W(0)‖_F` over the integrated trajectory.
    pub sup_param_drift: f64,
    /// `sup_t ‖W(t) − W_TK(t)‖_F`, including the limit `t → ∞`.
    pub sup_tk_deviation: f64,
    pub initial_residual: f64,
    pub inputs: KernelRegimeBoundInputs,
    pub applicable: bool,
    /// Closed-form bounds, present only when the preconditions hold.
    pub closed_form_bounds: Option<(f64, f64)>,
    pub converged: bool,
}

pub fn kernel_regime_deviation_report(
    meas: &MeasurementSet,
    targets: &[f64],
    model0: &FactorizationModel,
    config: &FlowConfig,
) -> Result<DeviationReport> {
    let inputs = KernelRegimeBoundInputs::measure(meas, targets, model0)?;
    let tk = TangentKernelFlow::new(meas, targets, model0)?;
    let initial_residual = tk.coeffs.norm();
    let w0 = model0.stacked();
    let (d, k) = model0.u.shape();
    let dk = d * k;
    let mut drift: f64 = 0.0;
    let mut dev: f64 = 0.0;
    let mut w = Matrix::zeros(2 * d, k);
    let out = run_factorization(meas, targets, model0, config, FactorizationMode::Flow, |t, s| {
        w.rows_mut(0, d).copy_from_slice(&s[..dk]);
        w.rows_mut(d, d).copy_from_slice(&s[dk..2 * dk]);
        drift = drift.max((&w - &w0).norm());
        dev = dev.max((&w - tk.params(t)).norm());
    })?;
    if out.converged && tk.interpolates() {
        dev = dev.max((out.final_model.stacked() - tk.params(f64::INFINITY)).norm());
    }
    let applicable = k >= d && inputs.applicable(initial_residual);
    Ok(DeviationReport {
        sup_param_drift: drift,
        sup_tk_deviation: dev,
        initial_residual,
        inputs,
        applicable,
        closed_form_bounds: applicable.then(|| closed_form_bounds(&inputs, initial_residual)),
        converged: out.converged,
    })
}
