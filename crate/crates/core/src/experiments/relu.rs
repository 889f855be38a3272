//! Fully connected ReLU networks trained by full-batch gradient descent, and
//! the tangent-kernel diagnostics used to tell lazy from active training.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::{sym_op_norm, Matrix};
use crate::rng::SeededRng;

/// Scalar-output MLP `g(x) = W_L σ(⋯σ(W₁x + b₁)⋯) + b_L` with ReLU `σ`.
///
/// Parameters are stored flat, layer by layer, each layer as its weights
/// (row-major, `out × in`) followed by its bias. With `unbiased_twin` the
/// network holds a second copy `θ'` and computes `g(θ, x) − g(θ', x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReluMlp {
    pub widths: Vec<usize>,
    pub params: Vec<f64>,
    pub unbiased_twin: bool,
}

/// The two-layer, scalar-input network `w₂σ(w₁x + b₁) + b₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReluNet {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub unbiased_twin: bool,
    /// The negated copy `(w1, b1, w2, b2)` when `unbiased_twin` is set.
    pub twin: Option<Box<ReluNet>>,
}

fn copy_len(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl ReluMlp {
    pub fn new(widths: Vec<usize>, params: Vec<f64>, unbiased_twin: bool) -> Result<Self> {
        if widths.len() < 3 || widths.contains(&0) {
            return param("a network needs an input, at least one hidden layer and an output, all nonempty");
        }
        if *widths.last().unwrap() != 1 {
            return param("networks have a scalar output");
        }
        let copies = if unbiased_twin { 2 } else { 1 };
        let expected = copies * copy_len(&widths);
        if params.len() != expected {
            return param(format!("expected {expected} parameters, got {}", params.len()));
        }
        Ok(Self { widths, params, unbiased_twin })
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn copies(&self) -> usize {
        if self.unbiased_twin {
            2
        } else {
            1
        }
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        let mut ws = Workspace::new(&self.widths);
        self.output_with(x, &mut ws)
    }

    pub fn outputs(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let mut ws = Workspace::new(&self.widths);
        xs.iter().map(|x| self.output_with(x, &mut ws)).collect()
    }

    fn output_with(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        let len = copy_len(&self.widths);
        let mut f = forward(&self.widths, &self.params[..len], x, ws);
        if self.unbiased_twin {
            f -= forward(&self.widths, &self.params[len..], x, ws);
        }
        f
    }

    /// `grad += coeff·∇_θ f(x)`; returns `f(x)`.
    fn accumulate_gradient(&self, x: &[f64], coeff: f64, grad: &mut [f64], ws: &mut Workspace) -> f64 {
        let len = copy_len(&self.widths);
        let mut f = 0.0;
        for c in 0..self.copies() {
            let sign = if c == 0 { 1.0 } else { -1.0 };
            let range = c * len..(c + 1) * len;
            f += sign * forward(&self.widths, &self.params[range.clone()], x, ws);
            backward(&self.widths, &self.params[range.clone()], x, sign * coeff, &mut grad[range], ws);
        }
        f
    }

    /// Residual-weighted gradient of the mean squared error; returns the loss.
    fn loss_gradient(&self, data: &ReluData, grad: &mut [f64], ws: &mut [Workspace; 2]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let len = copy_len(&self.widths);
        let n = data.len() as f64;
        let mut loss = 0.0;
        for (x, y) in data.inputs.iter().zip(&data.targets) {
            let mut f = forward(&self.widths, &self.params[..len], x, &mut ws[0]);
            if self.unbiased_twin {
                f -= forward(&self.widths, &self.params[len..], x, &mut ws[1]);
            }
            let r = f - y;
            loss += r * r;
            let coeff = 2.0 * r / n;
            let (own, twin) = grad.split_at_mut(len);
            backward(&self.widths, &self.params[..len], x, coeff, own, &mut ws[0]);
            if self.unbiased_twin {
                backward(&self.widths, &self.params[len..], x, -coeff, twin, &mut ws[1]);
            }
        }
        loss / n
    }

    /// Tangent features `∇_θ f(x)`.
    pub fn tangent_features(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.param_count()];
        let mut ws = Workspace::new(&self.widths);
        self.accumulate_gradient(x, 1.0, &mut g, &mut ws);
        g
    }

    /// Rows are the tangent features of `xs`.
    pub fn tangent_matrix(&self, xs: &[Vec<f64>]) -> Matrix {
        let p = self.param_count();
        let mut m = Matrix::zeros(xs.len(), p);
        let mut ws = Workspace::new(&self.widths);
        let mut g = vec![0.0; p];
        for (n, x) in xs.iter().enumerate() {
            g.iter_mut().for_each(|v| *v = 0.0);
            self.accumulate_gradient(x, 1.0, &mut g, &mut ws);
            for (j, v) in g.iter().enumerate() {
                m[(n, j)] = *v;
            }
        }
        m
    }

    /// Tangent-kernel Gram `K[n, m] = ⟨∇f(xₙ), ∇f(xₘ)⟩`.
    pub fn tangent_gram(&self, xs: &[Vec<f64>]) -> Matrix {
        let j = self.tangent_matrix(xs);
        &j * j.transpose()
    }

    /// Weights scaled by `c` and layer-`l` biases by `cˡ`; the output scales by `c^D`.
    pub fn scaled_homogeneous(&self, c: f64) -> Self {
        let mut out = self.clone();
        let len = copy_len(&self.widths);
        for copy in out.params.chunks_mut(len) {
            let mut off = 0;
            for (l, w) in self.widths.windows(2).enumerate() {
                let (fan_in, fan_out) = (w[0], w[1]);
                copy[off..off + fan_in * fan_out].iter_mut().for_each(|v| *v *= c);
                off += fan_in * fan_out;
                let cb = c.powi(l as i32 + 1);
                copy[off..off + fan_out].iter_mut().for_each(|v| *v *= cb);
                off += fan_out;
            }
        }
        out
    }

    pub fn to_two_layer(&self) -> Result<ReluNet> {
        if self.depth() != 2 || self.input_dim() != 1 {
            return param("only depth-2 networks on scalar inputs have a two-layer view");
        }
        let k = self.widths[1];
        let len = copy_len(&self.widths);
        let view = |p: &[f64]| ReluNet {
            w1: p[..k].to_vec(),
            b1: p[k..2 * k].to_vec(),
            w2: p[2 * k..3 * k].to_vec(),
            b2: p[3 * k],
            unbiased_twin: false,
            twin: None,
        };
        let mut net = view(&self.params[..len]);
        if self.unbiased_twin {
            net.unbiased_twin = true;
            net.twin = Some(Box::new(view(&self.params[len..])));
        }
        Ok(net)
    }
}

impl ReluNet {
    pub fn output(&self, x: f64) -> f64 {
        let own: f64 = self.w1.iter().zip(&self.b1).zip(&self.w2).map(|((w, b), a)| a * (w * x + b).max(0.0)).sum::<f64>() + self.b2;
        own - self.twin.as_ref().map_or(0.0, |t| t.output(x))
    }

    pub fn to_mlp(&self) -> Result<ReluMlp> {
        let k = self.w1.len();
        if self.b1.len() != k || self.w2.len() != k {
            return param("layer sizes disagree");
        }
        let mut params = [self.w1.as_slice(), &self.b1, &self.w2, &[self.b2]].concat();
        if self.unbiased_twin {
            let t = self.twin.as_ref().ok_or_else(|| Error::Parameter("unbiased twin is missing".into()))?;
            params.extend(t.w1.iter().chain(&t.b1).chain(&t.w2));
            params.push(t.b2);
        }
        ReluMlp::new(vec![1, k, 1], params, self.unbiased_twin)
    }
}

struct Workspace {
    /// Post-activation of every layer; `acts[0]` is unused (the input is borrowed).
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(widths: &[usize]) -> Self {
        Self {
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            pre: widths.iter().map(|&w| vec![0.0; w]).collect(),
            delta: widths.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }
}

fn forward(widths: &[usize], p: &[f64], x: &[f64], ws: &mut Workspace) -> f64 {
    let layers = widths.len() - 1;
    let mut off = 0;
    for l in 0..layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let (w, rest) = p[off..].split_at(fan_in * fan_out);
        let b = &rest[..fan_out];
        off += fan_in * fan_out + fan_out;
        let (before, after) = ws.acts.split_at_mut(l + 1);
        let input: &[f64] = if l == 0 { x } else { &before[l] };
        for o in 0..fan_out {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            let z = row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + b[o];
            ws.pre[l + 1][o] = z;
            after[0][o] = if l + 1 == layers { z } else { z.max(0.0) };
        }
    }
    ws.acts[layers][0]
}

/// Backpropagate `coeff·∂f/∂θ` into `grad` after [`forward`] on the same input.
fn backward(widths: &[usize], p: &[f64], x: &[f64], coeff: f64, grad: &mut [f64], ws: &mut Workspace) {
    let layers = widths.len() - 1;
    let mut base = p.len();
    ws.delta[layers][0] = coeff;
    for l in (0..layers).rev() {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        base -= fan_in * fan_out + fan_out;
        let input: &[f64] = if l == 0 { x } else { &ws.acts[l] };
        for o in 0..fan_out {
            let d = ws.delta[l + 1][o];
            if d == 0.0 {
                continue;
            }
            let g = &mut grad[base + o * fan_in..base + (o + 1) * fan_in];
            for (gi, a) in g.iter_mut().zip(input) {
                *gi += d * a;
            }
            grad[base + fan_in * fan_out + o] += d;
        }
        if l > 0 {
            let w = &p[base..base + fan_in * fan_out];
            for i in 0..fan_in {
                // σ'(0) = 0
                ws.delta[l][i] = if ws.pre[l][i] > 0.0 {
                    (0..fan_out).map(|o| w[o * fan_in + i] * ws.delta[l + 1][o]).sum()
                } else {
                    0.0
                };
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Weights `U(±√(6/fan_in))`, biases zero.
    UniformHe,
    /// First-layer weights and biases `N(0, 1)`; later weights `N(0, 2/fan_in)`,
    /// later biases zero.
    Gaussian,
}

/// Relative rescaling of the layers by `k^{∓p}` with `k` the first hidden
/// width: the first layer and every hidden bias by `k^{−p}`, the last layer
/// by `k^{p}`. Leaves the output unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerScaling {
    Standard,
    Half,
    Quarter,
}

impl LayerScaling {
    pub fn exponent(self) -> f64 {
        match self {
            LayerScaling::Standard => 0.0,
            LayerScaling::Half => 0.5,
            LayerScaling::Quarter => 0.25,
        }
    }

    pub const ALL: [LayerScaling; 3] = [LayerScaling::Standard, LayerScaling::Half, LayerScaling::Quarter];

    pub fn name(self) -> &'static str {
        match self {
            LayerScaling::Standard => "standard",
            LayerScaling::Half => "half",
            LayerScaling::Quarter => "quarter",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReluSetup {
    pub input_dim: usize,
    /// Number of weight layers.
    pub depth: usize,
    pub width: usize,
    pub alpha: f64,
    pub scaling: LayerScaling,
    pub init: InitScheme,
    pub unbiased_twin: bool,
    pub seed: u64,
}

impl ReluSetup {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(std::iter::repeat(self.width).take(self.depth - 1));
        w.push(1);
        w
    }
}

/// `w(0) = α·w₀` with `w₀` drawn from `setup.init` and rescaled by
/// `setup.scaling`; the twin, if any, is an exact copy.
pub fn init_relu(setup: &ReluSetup) -> Result<ReluMlp> {
    if setup.depth < 2 || setup.width == 0 || setup.input_dim == 0 {
        return param("need depth ≥ 2 and positive widths");
    }
    if !(setup.alpha > 0.0 && setup.alpha.is_finite()) {
        return param("alpha must be positive and finite");
    }
    let widths = setup.widths();
    let layers = widths.len() - 1;
    let mut rng = SeededRng::new(setup.seed);
    let c = (setup.width as f64).powf(setup.scaling.exponent());
    let mut p = Vec::with_capacity(copy_len(&widths));
    for l in 0..layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let last = l + 1 == layers;
        let w_factor = if l == 0 {
            1.0 / c
        } else if last {
            c
        } else {
            1.0
        };
        let b_factor = if last { 1.0 } else { 1.0 / c };
        for _ in 0..fan_in * fan_out {
            let w = match setup.init {
                InitScheme::UniformHe => {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    rng.uniform_range(-bound, bound)
                }
                InitScheme::Gaussian if l == 0 => rng.normal(),
                InitScheme::Gaussian => (2.0 / fan_in as f64).sqrt() * rng.normal(),
            };
            p.push(setup.alpha * w_factor * w);
        }
        for _ in 0..fan_out {
            let b = if setup.init == InitScheme::Gaussian && l == 0 { rng.normal() } else { 0.0 };
            p.push(setup.alpha * b_factor * b);
        }
    }
    if setup.unbiased_twin {
        let copy = p.clone();
        p.extend(copy);
    }
    ReluMlp::new(widths, p, setup.unbiased_twin)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReluData {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl ReluData {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return param("need a nonempty set of inputs with one target each");
        }
        let dim = inputs[0].len();
        if dim == 0 || inputs.iter().any(|x| x.len() != dim) {
            return param("inputs must share a positive dimension");
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    /// Mean squared error of `net` on this set.
    pub fn mse(&self, net: &ReluMlp) -> f64 {
        let out = net.outputs(&self.inputs);
        out.iter().zip(&self.targets).map(|(f, y)| (f - y) * (f - y)).sum::<f64>() / self.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ReluStep {
    Fixed(f64),
    /// `min(max_step, curvature_fraction/Λ̂)`, `Λ̂` the top eigenvalue of the
    /// Gauss–Newton matrix `(2/N)JᵀJ`, re-estimated every `refresh` steps
    /// and whenever the loss goes up.
    Adaptive { max_step: f64, curvature_fraction: f64, refresh: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub step: ReluStep,
    /// Stop once the mean squared training error is at most this.
    pub loss_tol: f64,
    pub max_iters: usize,
    pub record_every: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            step: ReluStep::Adaptive { max_step: 1.0, curvature_fraction: 1.0, refresh: 100 },
            loss_tol: 1e-9,
            max_iters: 2_000_000,
            record_every: 1000,
        }
    }
}

impl GdConfig {
    /// Fixed stepsize 0.01.
    pub fn fixed_step() -> Self {
        Self { step: ReluStep::Fixed(0.01), ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.step {
            ReluStep::Fixed(s) => s > 0.0 && s.is_finite(),
            ReluStep::Adaptive { max_step, curvature_fraction, refresh } => max_step > 0.0 && curvature_fraction > 0.0 && refresh > 0,
        };
        if !ok || !(self.loss_tol > 0.0) || self.max_iters == 0 || self.record_every == 0 {
            return param("invalid gradient descent configuration");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdTracePoint {
    pub iteration: usize,
    pub loss: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReluTrainResult {
    pub initial: ReluMlp,
    pub net: ReluMlp,
    pub trace: Vec<GdTracePoint>,
    pub iterations: usize,
    pub final_loss: f64,
    pub converged: bool,
}

/// Top eigenvalue of `(2/N)JJᵀ`, which shares its spectrum with `(2/N)JᵀJ`.
fn gauss_newton_curvature(net: &ReluMlp, data: &ReluData) -> f64 {
    2.0 * sym_op_norm(&net.tangent_gram(&data.inputs)) / data.len() as f64
}

/// Full-batch gradient descent on the mean squared error from `net0`.
pub fn train_from(net0: &ReluMlp, data: &ReluData, config: &GdConfig) -> Result<ReluTrainResult> {
    config.validate()?;
    if data.dim() != net0.input_dim() {
        return param("data and network input dimensions differ");
    }
    let mut net = net0.clone();
    let mut ws = [Workspace::new(&net.widths), Workspace::new(&net.widths)];
    let mut grad = vec![0.0; net.param_count()];
    let mut trace = Vec::new();
    let mut step = match config.step {
        ReluStep::Fixed(s) => s,
        ReluStep::Adaptive { .. } => 0.0,
    };
    let mut prev = f64::INFINITY;
    let mut since_refresh = usize::MAX;
    for iter in 0..config.max_iters {
        let loss = net.loss_gradient(data, &mut grad, &mut ws);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                message: format!("loss became non-finite; last recorded {:?}", trace.last()),
                time: iter as f64,
                state: net.params,
            });
        }
        if iter % config.record_every == 0 {
            trace.push(GdTracePoint { iteration: iter, loss, step });
        }
        if loss <= config.loss_tol {
            trace.push(GdTracePoint { iteration: iter, loss, step });
            return Ok(ReluTrainResult { initial: net0.clone(), net, trace, iterations: iter, final_loss: loss, converged: true });
        }
        if let ReluStep::Adaptive { max_step, curvature_fraction, refresh } = config.step {
            if since_refresh >= refresh || loss > prev {
                let lam = gauss_newton_curvature(&net, data);
                step = if lam > 0.0 { max_step.min(curvature_fraction / lam) } else { max_step };
                since_refresh = 0;
            }
            since_refresh += 1;
        }
        prev = loss;
        for (p, g) in net.params.iter_mut().zip(&grad) {
            *p -= step * g;
        }
    }
    let final_loss = data.mse(&net);
    trace.push(GdTracePoint { iteration: config.max_iters, loss: final_loss, step });
    Ok(ReluTrainResult {
        initial: net0.clone(),
        net,
        trace,
        iterations: config.max_iters,
        final_loss,
        converged: final_loss <= config.loss_tol,
    })
}

pub fn train_relu(data: &ReluData, setup: &ReluSetup, config: &GdConfig) -> Result<ReluTrainResult> {
    if setup.input_dim != data.dim() {
        return param("setup input_dim differs from the data dimension");
    }
    train_from(&init_relu(setup)?, data, config)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradDistanceForm {
    /// Cosine distance between the tangent-kernel Gram matrices.
    Gram,
    /// Cosine distance between each example's tangent features, averaged.
    PerExample,
}

fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("tangent features vanish; grad distance is undefined".into()));
    }
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

/// Laziness diagnostic in `[0, 2]`: 0 when the tangent kernel did not move.
pub fn grad_distance(init: &ReluMlp, fin: &ReluMlp, inputs: &[Vec<f64>], form: GradDistanceForm) -> Result<f64> {
    if init.widths != fin.widths || init.unbiased_twin != fin.unbiased_twin {
        return param("networks differ in architecture");
    }
    match form {
        GradDistanceForm::Gram => {
            let k0 = init.tangent_gram(inputs);
            let k1 = fin.tangent_gram(inputs);
            cosine_distance(k0.as_slice(), k1.as_slice())
        }
        GradDistanceForm::PerExample => {
            let mut acc = 0.0;
            for x in inputs {
                acc += cosine_distance(&init.tangent_features(x), &fin.tangent_features(x))?;
            }
            Ok(acc / inputs.len() as f64)
        }
    }
}
