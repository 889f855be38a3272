//! Generalization of the implicit-bias solution on planted sparse regression.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_sparse_regression, RegressionDataset};
use crate::error::{param, Result};
use crate::flow::{integrate_diagonal_flow, FlowConfig};
use crate::linalg::{l1_norm, l2_norm, sub};
use crate::minimizers::{min_l1, min_l2, min_q_depth2, min_q_depth_d};
use crate::rng::SeededRng;

/// Excess population risk `‖β − β*‖₂²` under isotropic Gaussian design.
///
/// The full risk adds the noise floor `noise_std²`.
pub fn population_risk(beta: &[f64], planted: &[f64]) -> Result<f64> {
    if beta.len() != planted.len() {
        return param(format!("beta has length {}, planted has {}", beta.len(), planted.len()));
    }
    Ok(beta.iter().zip(planted).map(|(b, p)| (b - p) * (b - p)).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepSolver {
    /// The constrained minimizer of the matching penalty.
    Dual,
    /// Integrate gradient flow.
    Flow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub alpha_grid: Vec<f64>,
    pub depth_list: Vec<u32>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    /// Excess risk at or below which a solution counts as recovering β*.
    pub target_risk: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub solver: SweepSolver,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() || self.depth_list.is_empty() || self.n_grid.is_empty() {
            return param("sweep grids must be nonempty");
        }
        if self.trials == 0 {
            return param("trials must be at least 1");
        }
        if self.alpha_grid.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return param("alpha grid entries must be positive and finite");
        }
        if self.depth_list.iter().any(|&d| d < 2) {
            return param("depths must be at least 2");
        }
        if self.n_grid.contains(&0) {
            return param("sample sizes must be positive");
        }
        if !(self.noise_std >= 0.0) || !(self.target_risk > 0.0) {
            return param("noise_std must be nonnegative and target_risk positive");
        }
        Ok(())
    }

    /// `points` log-spaced values in `[lo, hi]`.
    pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
        if points == 1 {
            return vec![lo];
        }
        let (a, b) = (lo.log10(), hi.log10());
        (0..points).map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64)).collect()
    }
}

/// Per-trial dataset. Rows are drawn for the largest sample size in the spec
/// and truncated, so designs are nested across N.
pub fn trial_dataset(spec: &SweepSpec, d: usize, n: usize, r_star: usize, trial: usize) -> Result<RegressionDataset> {
    let pool = spec.n_grid.iter().copied().max().unwrap_or(n).max(n);
    let seed = SeededRng::derive(spec.seed, trial as u64).next_u64();
    generate_sparse_regression(d, pool, r_star, spec.noise_std, seed)?.truncate(n)
}

/// The implicit-bias solution at scale α and depth D.
pub fn solve_cell(data: &RegressionDataset, alpha: f64, depth: u32, solver: SweepSolver) -> Result<Vec<f64>> {
    match solver {
        SweepSolver::Dual if depth == 2 => Ok(min_q_depth2(data, alpha, &vec![1.0; data.d()], 1e-10)?.beta),
        SweepSolver::Dual => Ok(min_q_depth_d(data, alpha, depth, 1e-10)?.beta),
        SweepSolver::Flow => {
            let res = integrate_diagonal_flow(data, depth, alpha, &vec![1.0; data.d()], &FlowConfig::default())?;
            if !res.converged {
                return Err(crate::Error::Numerical(format!(
                    "flow stopped at t = {:.3e} with residual {:.3e}",
                    res.final_time, res.final_residual
                )));
            }
            Ok(res.beta_inf)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub depth: u32,
    pub n: usize,
    pub alpha: f64,
    /// `α^D`, the scale of β at initialization.
    pub alpha_scaled: f64,
    /// Mean excess risk over the trials that converged.
    pub mean_risk: f64,
    /// `‖β‖₁ − ‖β_ℓ1‖₁`.
    pub l1_gap: f64,
    /// `‖β‖₂ − ‖β_ℓ2‖₂`.
    pub l2_gap: f64,
    pub converged_frac: f64,
    pub noise_floor: f64,
}

pub const SWEEP_HEADER: [&str; 9] =
    ["depth", "n", "alpha", "alpha_scaled", "mean_risk", "l1_gap", "l2_gap", "converged_frac", "noise_floor"];

impl SweepRow {
    pub fn record(&self) -> Vec<String> {
        use crate::data::fmt_f64;
        vec![
            self.depth.to_string(),
            self.n.to_string(),
            fmt_f64(self.alpha),
            fmt_f64(self.alpha_scaled),
            fmt_f64(self.mean_risk),
            fmt_f64(self.l1_gap),
            fmt_f64(self.l2_gap),
            fmt_f64(self.converged_frac),
            fmt_f64(self.noise_floor),
        ]
    }
}

struct TrialRefs {
    data: RegressionDataset,
    l1: f64,
    l2: f64,
}

struct CellOutcome {
    risk: f64,
    l1_gap: f64,
    l2_gap: f64,
}

fn trial_refs(spec: &SweepSpec, d: usize, n: usize, r_star: usize) -> Result<Vec<TrialRefs>> {
    (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let data = trial_dataset(spec, d, n, r_star, t)?;
            let l1 = l1_norm(&min_l1(&data, 1e-9)?.beta);
            let l2 = l2_norm(&min_l2(&data, None)?.beta);
            Ok(TrialRefs { data, l1, l2 })
        })
        .collect()
}

fn run_cell(refs: &TrialRefs, alpha: f64, depth: u32, solver: SweepSolver) -> Option<CellOutcome> {
    let beta = solve_cell(&refs.data, alpha, depth, solver).ok()?;
    let planted = refs.data.planted.as_ref()?;
    Some(CellOutcome {
        risk: l2_norm(&sub(&beta, planted)).powi(2),
        l1_gap: l1_norm(&beta) - refs.l1,
        l2_gap: l2_norm(&beta) - refs.l2,
    })
}

fn aggregate(depth: u32, n: usize, alpha: f64, noise_std: f64, cells: &[Option<CellOutcome>]) -> SweepRow {
    let ok: Vec<&CellOutcome> = cells.iter().flatten().collect();
    let m = ok.len() as f64;
    let mean = |f: fn(&CellOutcome) -> f64| if ok.is_empty() { f64::NAN } else { ok.iter().map(|c| f(c)).sum::<f64>() / m };
    SweepRow {
        depth,
        n,
        alpha,
        alpha_scaled: alpha.powi(depth as i32),
        mean_risk: mean(|c| c.risk),
        l1_gap: mean(|c| c.l1_gap),
        l2_gap: mean(|c| c.l2_gap),
        converged_frac: m / cells.len() as f64,
        noise_floor: noise_std * noise_std,
    }
}

/// One row per α in the grid, averaged over trials. Trials share their
/// design across α; cells that fail to converge are counted, not fatal.
pub fn sweep_alpha_generalization(spec: &SweepSpec, d: usize, n: usize, r_star: usize, depth: u32) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    if depth < 2 {
        return param("depth must be at least 2");
    }
    let refs = trial_refs(spec, d, n, r_star)?;
    let rows = spec
        .alpha_grid
        .par_iter()
        .map(|&alpha| {
            let cells: Vec<Option<CellOutcome>> = refs.iter().map(|r| run_cell(r, alpha, depth, spec.solver)).collect();
            aggregate(depth, n, alpha, spec.noise_std, &cells)
        })
        .collect();
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub depth: u32,
    pub n: usize,
    /// Largest grid α at which every smaller grid α also recovers.
    pub alpha_star: Option<f64>,
    /// `α*^D`.
    pub alpha_star_scaled: Option<f64>,
    /// Grid points above `alpha_star` that recover again.
    pub monotonicity_violations: usize,
}

pub const RECOVERY_HEADER: [&str; 5] = ["depth", "n", "alpha_star", "alpha_star_scaled", "monotonicity_violations"];

impl RecoveryRow {
    pub fn record(&self) -> Vec<String> {
        use crate::data::fmt_f64;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "none".to_string());
        vec![
            self.depth.to_string(),
            self.n.to_string(),
            opt(self.alpha_star),
            opt(self.alpha_star_scaled),
            self.monotonicity_violations.to_string(),
        ]
    }
}

/// Recovery threshold per N in `spec.n_grid`: every grid α is evaluated and
/// the conservative threshold is reported, with counted violations of
/// monotonicity in α.
pub fn largest_alpha_for_recovery(spec: &SweepSpec, d: usize, r_star: usize, depth: u32) -> Result<Vec<RecoveryRow>> {
    spec.validate()?;
    let mut alphas = spec.alpha_grid.clone();
    alphas.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(spec.n_grid.len());
    for &n in &spec.n_grid {
        let sorted = SweepSpec { alpha_grid: alphas.clone(), ..spec.clone() };
        let rows = sweep_alpha_generalization(&sorted, d, n, r_star, depth)?;
        let pass: Vec<bool> = rows.iter().map(|r| r.converged_frac > 0.0 && r.mean_risk <= spec.target_risk).collect();
        let lead = pass.iter().take_while(|p| **p).count();
        let alpha_star = (lead > 0).then(|| alphas[lead - 1]);
        out.push(RecoveryRow {
            depth,
            n,
            alpha_star,
            alpha_star_scaled: alpha_star.map(|a| a.powi(depth as i32)),
            monotonicity_violations: pass[lead..].iter().filter(|p| **p).count(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(alphas: Vec<f64>, n_grid: Vec<usize>, trials: usize) -> SweepSpec {
        SweepSpec {
            alpha_grid: alphas,
            depth_list: vec![2],
            n_grid,
            trials,
            target_risk: 0.025,
            noise_std: 0.0,
            seed: 3,
            solver: SweepSolver::Dual,
        }
    }

    #[test]
    fn risk_examples() {
        assert_eq!(population_risk(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        let p = [0.5; 4];
        assert!((population_risk(&[0.0; 4], &p).unwrap() - 1.0).abs() < 1e-15);
        assert!(population_risk(&[0.0; 3], &p).is_err());
    }

    #[test]
    fn closed_form_risk_matches_monte_carlo() {
        let beta = [0.3, -0.2, 0.0, 0.9, 0.1];
        let planted = [0.5, 0.5, 0.5, 0.5, 0.0];
        let noise = 0.1;
        let mut rng = SeededRng::new(11);
        let samples = 100_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let x = rng.normal_vec(5);
            let y: f64 = x.iter().zip(&planted).map(|(a, b)| a * b).sum::<f64>() + noise * rng.normal();
            let f: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            acc += (f - y) * (f - y);
        }
        let mc = acc / samples as f64;
        let closed = population_risk(&beta, &planted).unwrap() + noise * noise;
        assert!((mc - closed).abs() / closed < 0.02, "mc {mc} closed {closed}");
    }

    #[test]
    fn gaps_vanish_at_the_extremes() {
        let s = spec(vec![1e-4, 1e3], vec![20], 2);
        let rows = sweep_alpha_generalization(&s, 40, 20, 3, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.converged_frac == 1.0));
        let (small, large) = (&rows[0], &rows[1]);
        assert!(small.l1_gap.abs() < 0.1, "{small:?}");
        assert!(large.l2_gap.abs() < 1e-4, "{large:?}");
        assert!(small.mean_risk < large.mean_risk);
    }

    #[test]
    fn flow_and_dual_routes_agree() {
        let mut s = spec(vec![0.3, 2.0], vec![10], 1);
        let dual = sweep_alpha_generalization(&s, 20, 10, 2, 2).unwrap();
        s.solver = SweepSolver::Flow;
        let flow = sweep_alpha_generalization(&s, 20, 10, 2, 2).unwrap();
        for (a, b) in dual.iter().zip(&flow) {
            assert!((a.mean_risk - b.mean_risk).abs() <= 1e-2 * a.mean_risk.abs().max(1e-12), "{a:?} {b:?}");
        }
    }

    #[test]
    fn recovery_threshold_shapes() {
        let s = spec(SweepSpec::log_grid(1e-3, 10.0, 9), vec![8, 40], 2);
        let rows = largest_alpha_for_recovery(&s, 40, 2, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].alpha_star.is_none(), "{:?}", rows[0]);
        assert!(rows[1].alpha_star.is_some(), "{:?}", rows[1]);
        assert_eq!(rows[1].alpha_star_scaled, rows[1].alpha_star.map(|a| a * a));
    }

    #[test]
    fn designs_nest_across_sample_sizes() {
        let s = spec(vec![1.0], vec![5, 12], 1);
        let a = trial_dataset(&s, 6, 5, 2, 0).unwrap();
        let b = trial_dataset(&s, 6, 12, 2, 0).unwrap();
        assert_eq!(a.design, b.design.rows(0, 5).into_owned());
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(vec![], vec![5], 1);
        assert!(s.validate().is_err());
        s.alpha_grid = vec![1.0];
        s.trials = 0;
        assert!(s.validate().is_err());
    }
}
