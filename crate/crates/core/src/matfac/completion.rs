//! Rank-one matrix completion by gradient descent on `UVᵀ`, one cell of the
//! scale/width phase diagram per call.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::{power_iteration, Matrix};
use crate::rng::SeededRng;

use super::matrix_norms;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    /// `min(max_step, curvature_fraction/Λ̂)` with the curvature `Λ̂`
    /// re-estimated every `refresh` iterations.
    Adaptive { max_step: f64, curvature_fraction: f64, refresh: usize },
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig {
    pub step: StepRule,
    /// Stop once the root-mean-square training residual falls to this value.
    pub train_rms_tol: f64,
    pub max_iters: usize,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            step: StepRule::Adaptive { max_step: 1e-2, curvature_fraction: 0.1, refresh: 500 },
            train_rms_tol: 1e-7,
            max_iters: 2_000_000,
        }
    }
}

impl CompletionConfig {
    /// Fixed stepsize `1e−5`.
    pub fn fixed_step() -> Self {
        Self { step: StepRule::Fixed(1e-5), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        match self.step {
            StepRule::Adaptive { max_step, curvature_fraction, refresh } => {
                if !(max_step > 0.0 && curvature_fraction > 0.0) || refresh == 0 {
                    return param("adaptive step parameters must be positive");
                }
            }
            StepRule::Fixed(s) => {
                if !(s > 0.0 && s.is_finite()) {
                    return param("fixed stepsize must be positive");
                }
            }
        }
        if !(self.train_rms_tol > 0.0) || self.max_iters == 0 {
            return param("train_rms_tol and max_iters must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionCell {
    pub d: usize,
    pub k: usize,
    pub alpha: f64,
    /// `α²k`.
    pub lifted_scale: f64,
    pub n_obs: usize,
    pub seed: u64,
    /// `‖Y*‖_*`.
    pub truth_nuclear: f64,
    /// `‖M‖_* − ‖Y*‖_*`.
    pub excess_nuclear: f64,
    /// `excess_nuclear / ‖Y*‖_*`.
    pub normalized_excess: f64,
    /// RMS of `M − M(0)` over the unobserved entries.
    pub unobserved_rms_move: f64,
    /// RMS of `M − M(0)` over the observed entries.
    pub observed_rms_move: f64,
    /// `unobserved_rms_move / observed_rms_move`.
    pub relative_unobserved_move: f64,
    pub train_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const COMPLETION_HEADER: [&str; 15] = [
    "d",
    "k",
    "alpha",
    "lifted_scale",
    "n_obs",
    "seed",
    "truth_nuclear",
    "excess_nuclear",
    "normalized_excess",
    "unobserved_rms_move",
    "observed_rms_move",
    "relative_unobserved_move",
    "train_rms",
    "iterations",
    "converged",
];

impl CompletionCell {
    pub fn record(&self) -> Vec<String> {
        use crate::data::fmt_f64;
        vec![
            self.d.to_string(),
            self.k.to_string(),
            fmt_f64(self.alpha),
            fmt_f64(self.lifted_scale),
            self.n_obs.to_string(),
            self.seed.to_string(),
            fmt_f64(self.truth_nuclear),
            fmt_f64(self.excess_nuclear),
            fmt_f64(self.normalized_excess),
            fmt_f64(self.unobserved_rms_move),
            fmt_f64(self.observed_rms_move),
            fmt_f64(self.relative_unobserved_move),
            fmt_f64(self.train_rms),
            self.iterations.to_string(),
            self.converged.to_string(),
        ]
    }
}

/// Row-major d×k factors with the gradient specialized to entry indicators.
struct Factors {
    d: usize,
    k: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Factors {
    fn row<'a>(m: &'a [f64], k: usize, i: usize) -> &'a [f64] {
        &m[i * k..(i + 1) * k]
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn residuals(&self, mask: &[(usize, usize)], y: &[f64], r: &mut [f64]) {
        for (n, &(i, j)) in mask.iter().enumerate() {
            r[n] = Self::dot(Self::row(&self.u, self.k, i), Self::row(&self.v, self.k, j)) - y[n];
        }
    }

    /// Adds `scale·(GV, GᵀU)` with `G = Σ cₙ e_{iₙ}e_{jₙ}ᵀ` to `(du, dv)`.
    fn accumulate(&self, mask: &[(usize, usize)], c: &[f64], scale: f64, du: &mut [f64], dv: &mut [f64]) {
        let k = self.k;
        for (&(i, j), &cn) in mask.iter().zip(c) {
            let s = scale * cn;
            let vj = Self::row(&self.v, k, j);
            let ui = Self::row(&self.u, k, i);
            du[i * k..(i + 1) * k].iter_mut().zip(vj).for_each(|(a, b)| *a += s * b);
            dv[j * k..(j + 1) * k].iter_mut().zip(ui).for_each(|(a, b)| *a += s * b);
        }
    }

    fn product(&self) -> Matrix {
        Matrix::from_fn(self.d, self.d, |i, j| Self::dot(Self::row(&self.u, self.k, i), Self::row(&self.v, self.k, j)))
    }

    /// Top eigenvalue of the Gauss–Newton Hessian `2JJᵀ` plus `2‖G‖_F`.
    fn curvature(&self, mask: &[(usize, usize)], r: &[f64], warm: &mut Vec<f64>) -> f64 {
        let n = mask.len();
        let mut du = vec![0.0; self.u.len()];
        let mut dv = vec![0.0; self.v.len()];
        let top = power_iteration(warm, 20, |c, w| {
            du.iter_mut().for_each(|x| *x = 0.0);
            dv.iter_mut().for_each(|x| *x = 0.0);
            self.accumulate(mask, c, 1.0, &mut du, &mut dv);
            for (m, &(i, j)) in mask.iter().enumerate() {
                w[m] = Self::dot(Self::row(&du, self.k, i), Self::row(&self.v, self.k, j))
                    + Self::dot(Self::row(&self.u, self.k, i), Self::row(&dv, self.k, j));
            }
        });
        let mut g = std::collections::HashMap::with_capacity(n);
        for (&(i, j), &rn) in mask.iter().zip(r) {
            *g.entry((i, j)).or_insert(0.0) += rn;
        }
        let g_norm = g.values().map(|v: &f64| v * v).sum::<f64>().sqrt();
        2.0 * top + 2.0 * g_norm
    }
}

/// One phase-diagram cell: `Y* = u*(v*)ᵀ` with `u*, v* ~ N(0, I_d)`, `n_obs`
/// entries observed without replacement, `U(0), V(0)` i.i.d. `N(0, α²)`.
///
/// The ground truth and mask depend only on `seed`; the initialization is
/// drawn from an independent stream of the same seed.
pub fn completion_phase_cell(
    d: usize,
    k: usize,
    alpha: f64,
    n_obs: usize,
    seed: u64,
    config: &CompletionConfig,
) -> Result<CompletionCell> {
    config.validate()?;
    if d == 0 || k == 0 {
        return param("d and k must be positive");
    }
    if n_obs == 0 || n_obs > d * d {
        return param(format!("need 1 ≤ N ≤ d² = {}, got {n_obs}", d * d));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return param("alpha must be non-negative and finite");
    }
    let mut truth_rng = SeededRng::derive(seed, 0);
    let us = truth_rng.normal_vec(d);
    let vs = truth_rng.normal_vec(d);
    let truth = Matrix::from_fn(d, d, |i, j| us[i] * vs[j]);
    let mut mask: Vec<(usize, usize)> =
        truth_rng.sample_without_replacement(d * d, n_obs).into_iter().map(|p| (p / d, p % d)).collect();
    mask.sort_unstable();
    let y: Vec<f64> = mask.iter().map(|&(i, j)| truth[(i, j)]).collect();

    let mut init_rng = SeededRng::derive(seed, 1);
    let u: Vec<f64> = (0..d * k).map(|_| alpha * init_rng.normal()).collect();
    let v: Vec<f64> = (0..d * k).map(|_| alpha * init_rng.normal()).collect();
    let mut f = Factors { d, k, u, v };
    let m0 = f.product();

    let n = n_obs;
    let mut r = vec![0.0; n];
    let mut du = vec![0.0; d * k];
    let mut dv = vec![0.0; d * k];
    let mut warm = vec![0.0; n];
    let mut step = match config.step {
        StepRule::Fixed(s) => s,
        StepRule::Adaptive { max_step, .. } => max_step,
    };
    let tol = config.train_rms_tol * (n as f64).sqrt();
    let mut iterations = 0;
    let mut rn;
    let mut diverged = false;
    loop {
        f.residuals(&mask, &y, &mut r);
        rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !rn.is_finite() {
            diverged = true;
            break;
        }
        if rn <= tol || iterations >= config.max_iters {
            break;
        }
        if let StepRule::Adaptive { max_step, curvature_fraction, refresh } = config.step {
            if iterations % refresh == 0 {
                let lam = f.curvature(&mask, &r, &mut warm);
                step = if lam > 0.0 { max_step.min(curvature_fraction / lam) } else { max_step };
            }
        }
        du.iter_mut().for_each(|x| *x = 0.0);
        dv.iter_mut().for_each(|x| *x = 0.0);
        f.accumulate(&mask, &r, 2.0, &mut du, &mut dv);
        f.u.iter_mut().zip(&du).for_each(|(a, g)| *a -= step * g);
        f.v.iter_mut().zip(&dv).for_each(|(a, g)| *a -= step * g);
        iterations += 1;
    }
    let train_rms = rn / (n as f64).sqrt();
    let converged = !diverged && rn <= tol;
    let m = f.product();
    let truth_nuclear = matrix_norms(&truth)?.nuclear;
    let (excess_nuclear, unobserved_rms_move, observed_rms_move) = if diverged {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let excess = matrix_norms(&m)?.nuclear - truth_nuclear;
        let mut observed = vec![false; d * d];
        mask.iter().for_each(|&(i, j)| observed[i * d + j] = true);
        let (mut so, mut su) = (0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                let delta = (m[(i, j)] - m0[(i, j)]).powi(2);
                if observed[i * d + j] {
                    so += delta;
                } else {
                    su += delta;
                }
            }
        }
        let unobs = d * d - n;
        let su = if unobs == 0 { 0.0 } else { (su / unobs as f64).sqrt() };
        (excess, su, (so / n as f64).sqrt())
    };
    Ok(CompletionCell {
        d,
        k,
        alpha,
        lifted_scale: alpha * alpha * k as f64,
        n_obs,
        seed,
        truth_nuclear,
        excess_nuclear,
        normalized_excess: excess_nuclear / truth_nuclear,
        unobserved_rms_move,
        observed_rms_move,
        relative_unobserved_move: if observed_rms_move > 0.0 { unobserved_rms_move / observed_rms_move } else { 0.0 },
        train_rms,
        iterations,
        converged,
    })
}

/// Every `(alpha, k, seed)` cell, in that lexicographic order, on `threads`
/// workers (all cores when `None`).
pub fn completion_phase_grid(
    d: usize,
    n_obs: usize,
    alphas: &[f64],
    ks: &[usize],
    seeds: &[u64],
    config: &CompletionConfig,
    threads: Option<usize>,
) -> Result<Vec<CompletionCell>> {
    if alphas.is_empty() || ks.is_empty() || seeds.is_empty() {
        return param("alpha, k and seed grids must be non-empty");
    }
    let jobs: Vec<(f64, usize, u64)> = alphas
        .iter()
        .flat_map(|&a| ks.iter().flat_map(move |&k| seeds.iter().map(move |&s| (a, k, s))))
        .collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        pool = pool.num_threads(t.max(1));
    }
    let pool = pool.build().map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(|&(a, k, s)| completion_phase_cell(d, k, a, n_obs, s, config)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rich_cell_recovers_nuclear_norm() {
        let cell = completion_phase_cell(10, 100, 0.01, 60, 0, &CompletionConfig::default()).unwrap();
        assert!(cell.converged, "{cell:?}");
        assert!(cell.normalized_excess <= 0.05, "{cell:?}");
    }

    #[test]
    fn kernel_cell_barely_moves_unobserved_entries() {
        let (k, alpha) = (100, 1.0);
        let cell = completion_phase_cell(10, k, alpha, 60, 1, &CompletionConfig::default()).unwrap();
        assert!(cell.converged, "{cell:?}");
        let scale = alpha * alpha * (k as f64).sqrt() * 10f64.sqrt();
        assert!(cell.unobserved_rms_move <= 0.05 * scale, "{cell:?}");
    }

    #[test]
    fn fully_observed_recovers_truth() {
        for alpha in [0.05, 0.5] {
            let cell = completion_phase_cell(4, 8, alpha, 16, 3, &CompletionConfig::default()).unwrap();
            assert!(cell.converged && cell.train_rms <= 1e-7);
            assert!(cell.normalized_excess.abs() < 1e-5, "{cell:?}");
            assert_eq!(cell.unobserved_rms_move, 0.0);
        }
    }

    #[test]
    fn grid_is_ordered_and_deterministic() {
        let cfg = CompletionConfig::default();
        let a = completion_phase_grid(4, 8, &[0.3, 0.1], &[4, 8], &[0, 1], &cfg, Some(2)).unwrap();
        let b = completion_phase_grid(4, 8, &[0.3, 0.1], &[4, 8], &[0, 1], &cfg, Some(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert_eq!((a[0].alpha, a[0].k, a[0].seed), (0.3, 4, 0));
        assert_eq!((a[7].alpha, a[7].k, a[7].seed), (0.1, 8, 1));
        assert!(completion_phase_cell(3, 2, 0.1, 10, 0, &cfg).is_err());
    }
}
