use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;

use regime::checks::ALL_CHECKS;
use regime::data::{fmt_f64, generate_sparse_regression, sidecar_path, write_atomic, write_table, RegressionDataset};
use regime::experiments::{
    default_univariate_points, grad_distance_sweep, largest_alpha_for_recovery, sweep_alpha_generalization,
    univariate_spline_report, GdConfig, GradDistanceSpec, LayerScaling, RecoveryRow, SweepSolver, SweepSpec,
    GRAD_DISTANCE_HEADER, RECOVERY_HEADER, SPLINE_HEADER, SWEEP_HEADER,
};
use regime::flow::{integrate_diagonal_flow, write_trace_csv, FlowConfig};
use regime::matfac::{completion_phase_grid, CompletionConfig, COMPLETION_HEADER};
use regime::minimizers::{min_l1, min_l2, min_q_depth2, min_q_depth_d};
use regime::regularizers::{l1_ratio_curve, penalty_table, transition_width, PENALTY_TABLE_HEADER};

use crate::args::{AlphaGrid, Command, FlowTolerances, Method, Solver, SparseTask};
use crate::manifest::{now, RunManifest};

/// Bad argument combination that clap cannot express; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Invariants of the pipeline that did not hold.
pub type Violations = Vec<String>;

pub fn execute(cmd: &Command, threads: Option<usize>) -> Result<Violations> {
    let started = now();
    let mut violations = Vec::new();
    let (artifacts, manifest_path) = match cmd {
        Command::Generate { d, n, r_star, noise, seed, output } => {
            ensure_parent(output)?;
            let data = generate_sparse_regression(*d, *n, *r_star, *noise, *seed)?;
            data.write(output, &data.manifest(Some(*seed), Some(*r_star)))?;
            (vec![output.clone(), sidecar_path(output)], output.with_extension("manifest.json"))
        }
        Command::Flow { data, depth, alpha, shape, tol, trace, out } => {
            let (ds, _) = RegressionDataset::read(data)?;
            let shape = shape_or_ones(shape.as_deref(), ds.d())?;
            let cfg = FlowConfig { record_beta: *trace, ..flow_config(tol) };
            let res = integrate_diagonal_flow(&ds, *depth, *alpha, &shape, &cfg)?;
            let report = json!({
                "beta": res.beta_inf,
                "dual_nu": res.dual_nu,
                "converged": res.converged,
                "steps": res.steps,
                "final_time": res.final_time,
                "final_residual": res.final_residual,
            });
            let text = serde_json::to_string_pretty(&report)?;
            println!("{text}");
            if !res.converged {
                violations.push(format!("flow stopped at t = {} with residual {}", res.final_time, res.final_residual));
            }
            let Some(dir) = out else { return Ok(violations) };
            fs::create_dir_all(dir)?;
            let mut paths = vec![dir.join("flow.json")];
            write_atomic(&paths[0], text.as_bytes())?;
            if *trace {
                paths.push(dir.join("flow_trace.csv"));
                write_trace_csv(&paths[1], &res.residual_trace)?;
            }
            (paths, dir.join("flow.manifest.json"))
        }
        Command::Solve { data, method, alpha, depth, shape, tol, out } => {
            let (ds, _) = RegressionDataset::read(data)?;
            let need_alpha = || alpha.map_or_else(|| usage("--alpha is required for this method"), Ok);
            let sol = match method {
                Method::Q2 => min_q_depth2(&ds, need_alpha()?, &shape_or_ones(shape.as_deref(), ds.d())?, *tol)?,
                Method::Qd => min_q_depth_d(&ds, need_alpha()?, *depth, *tol)?,
                Method::L1 => min_l1(&ds, *tol)?,
                Method::L2 => min_l2(&ds, None)?,
                Method::Wl2 => {
                    let Some(s) = shape else { return usage("--shape is required for wl2") };
                    min_l2(&ds, Some(s))?
                }
            };
            let text = serde_json::to_string_pretty(&sol)?;
            println!("{text}");
            let Some(dir) = out else { return Ok(violations) };
            fs::create_dir_all(dir)?;
            let path = dir.join("solve.json");
            write_atomic(&path, text.as_bytes())?;
            (vec![path], dir.join("solve.manifest.json"))
        }
        Command::PenaltyTable { z_min, z_max, points, out } => {
            fs::create_dir_all(&out.out)?;
            let path = out.out.join("penalty_table.csv");
            write_table(&path, &PENALTY_TABLE_HEADER, penalty_table(*z_min, *z_max, *points)?.iter().map(|r| r.record()))?;
            (vec![path], out.out.join("penalty-table.manifest.json"))
        }
        Command::Phase { d, n_obs, lifted_scales, ks, seed, reps, fixed_step, out } => {
            fs::create_dir_all(&out.out)?;
            let cfg = if *fixed_step { CompletionConfig::fixed_step() } else { CompletionConfig::default() };
            let seeds: Vec<u64> = (0..*reps).map(|i| seed + i).collect();
            let mut cells = Vec::new();
            for &k in ks {
                let alphas: Vec<f64> = lifted_scales.iter().map(|s| (s / k as f64).sqrt()).collect();
                cells.extend(completion_phase_grid(*d, *n_obs, &alphas, &[k], &seeds, &cfg, threads)?);
            }
            let unconverged = cells.iter().filter(|c| !c.converged).count();
            if unconverged > 0 {
                violations.push(format!("{unconverged} cells reached the iteration cap"));
            }
            let path = out.out.join("phase.csv");
            write_table(&path, &COMPLETION_HEADER, cells.iter().map(|c| c.record()))?;
            (vec![path], out.out.join("phase.manifest.json"))
        }
        Command::Fig1 { task, curve_n, depth, seed, out } => {
            fs::create_dir_all(&out.out)?;
            let spec = sweep_spec(task, vec![*depth], *seed);
            let mut rows = Vec::new();
            for &n in curve_n {
                rows.extend(sweep_alpha_generalization(&spec, task.d, n, task.r_star, *depth)?);
            }
            let recovery = largest_alpha_for_recovery(&spec, task.d, task.r_star, *depth)?;
            if !nondecreasing(recovery.iter().map(star)) {
                violations.push("largest recovering α is not nondecreasing in N".into());
            }
            let (a, b) = (out.out.join("fig1_sweep.csv"), out.out.join("fig1_recovery.csv"));
            write_table(&a, &SWEEP_HEADER, rows.iter().map(|r| r.record()))?;
            write_table(&b, &RECOVERY_HEADER, recovery.iter().map(|r| r.record()))?;
            (vec![a, b], out.out.join("fig1.manifest.json"))
        }
        Command::Fig2 { d, depths, alpha_min, alpha_max, points, out } => {
            fs::create_dir_all(&out.out)?;
            let (ratio_rows, widths) = ratio_curves(*d, depths, *alpha_min, *alpha_max, *points, &mut violations)?;
            let mut by_depth = widths.clone();
            by_depth.sort_by_key(|w| w.0);
            if !by_depth.windows(2).all(|w| w[1].1 < w[0].1) {
                violations.push("transition width does not shrink with depth".into());
            }
            let (a, b, c) = (out.out.join("fig2_ratio.csv"), out.out.join("fig2_width.csv"), out.out.join("fig2_penalty.csv"));
            write_table(&a, &["depth", "d", "alpha", "ratio", "normalized_ratio"], ratio_rows)?;
            write_table(&b, &["depth", "d", "width_decades"], widths.iter().map(|(k, w)| vec![k.to_string(), d.to_string(), fmt_f64(*w)]))?;
            write_table(&c, &PENALTY_TABLE_HEADER, penalty_table(1e-3, 1e3, 61)?.iter().map(|r| r.record()))?;
            (vec![a, b, c], out.out.join("fig2.manifest.json"))
        }
        Command::Fig4 { task, depths, seed, out } => {
            fs::create_dir_all(&out.out)?;
            let spec = sweep_spec(task, depths.clone(), *seed);
            let mut recovery: Vec<RecoveryRow> = Vec::new();
            for &depth in depths {
                recovery.extend(largest_alpha_for_recovery(&spec, task.d, task.r_star, depth)?);
            }
            for &n in &task.n_grid {
                let mut at_n: Vec<&RecoveryRow> = recovery.iter().filter(|r| r.n == n).collect();
                at_n.sort_by_key(|r| r.depth);
                if !nondecreasing(at_n.iter().map(|r| r.alpha_star_scaled.unwrap_or(0.0))) {
                    violations.push(format!("at N = {n} the largest recovering α^D does not grow with depth"));
                }
            }
            let (ratio_rows, _) = ratio_curves(task.d, depths, 1e-12, 1e6, 50, &mut violations)?;
            let (a, b) = (out.out.join("fig4_recovery.csv"), out.out.join("fig4_ratio.csv"));
            write_table(&a, &RECOVERY_HEADER, recovery.iter().map(|r| r.record()))?;
            write_table(&b, &["depth", "d", "alpha", "ratio", "normalized_ratio"], ratio_rows)?;
            (vec![a, b], out.out.join("fig4.manifest.json"))
        }
        Command::Fig5 { depths, alphas, seed, reps, width, n_train, n_test, no_twin, fixed_step, out } => {
            fs::create_dir_all(&out.out)?;
            let spec = GradDistanceSpec {
                depths: depths.clone(),
                alphas: alphas.clone(),
                seeds: (0..*reps).map(|i| seed + i).collect(),
                width: *width,
                n_train: *n_train,
                n_test: *n_test,
                unbiased_twin: !no_twin,
                config: if *fixed_step { GdConfig::fixed_step() } else { GdConfig::default() },
            };
            let rows = grad_distance_sweep(&spec)?;
            for &depth in depths {
                let ok = spec
                    .seeds
                    .iter()
                    .filter(|&&s| {
                        let mut path: Vec<(f64, f64)> =
                            rows.iter().filter(|r| r.depth == depth && r.seed == s).map(|r| (r.alpha, r.grad_distance)).collect();
                        path.sort_by(|a, b| a.0.total_cmp(&b.0));
                        path.windows(2).all(|w| w[1].1 <= w[0].1)
                    })
                    .count();
                if 2 * ok <= spec.seeds.len() {
                    violations.push(format!("depth {depth}: grad distance decreases in α for only {ok} seeds"));
                }
            }
            let path = out.out.join("fig5.csv");
            write_table(&path, &GRAD_DISTANCE_HEADER, rows.iter().map(|r| r.record()))?;
            (vec![path], out.out.join("fig5.manifest.json"))
        }
        Command::Fig8 { width, alphas, seed, full_scale, out } => {
            fs::create_dir_all(&out.out)?;
            let (width, cfg) = if *full_scale { (10_000, GdConfig::fixed_step()) } else { (*width, GdConfig::default()) };
            let points = default_univariate_points();
            let runs: Vec<(f64, LayerScaling)> =
                alphas.iter().flat_map(|&a| LayerScaling::ALL.iter().map(move |&s| (a, s))).collect();
            let reports = {
                use rayon::prelude::*;
                runs.par_iter()
                    .map(|&(a, s)| univariate_spline_report(&points, a, width, s, &cfg, *seed))
                    .collect::<regime::Result<Vec<_>>>()?
            };
            let standard: Vec<f64> =
                reports.iter().filter(|r| r.scaling == LayerScaling::Standard).map(|r| r.rmse_to_linear_spline).collect();
            if standard.len() >= 2 && standard[0] >= standard[standard.len() - 1] {
                violations.push("smallest α is not closer to the linear spline than the largest".into());
            }
            let (a, b) = (out.out.join("fig8.csv"), out.out.join("fig8_points.csv"));
            write_table(&a, &SPLINE_HEADER, reports.iter().flat_map(|r| r.records()))?;
            write_table(&b, &["x", "y"], points.iter().map(|p| vec![fmt_f64(p.0), fmt_f64(p.1)]))?;
            (vec![a, b], out.out.join("fig8.manifest.json"))
        }
        Command::Check { only, out } => {
            if let Some(bad) = only.iter().find(|o| !ALL_CHECKS.iter().any(|c| c.0 == o.as_str())) {
                let names: Vec<&str> = ALL_CHECKS.iter().map(|c| c.0).collect();
                return usage(format!("unknown check `{bad}`; known: {}", names.join(", ")));
            }
            let mut outcomes = Vec::new();
            for (name, check) in ALL_CHECKS {
                if !only.is_empty() && !only.iter().any(|o| o == name) {
                    continue;
                }
                let o = check().with_context(|| format!("check {name}"))?;
                println!("{}", o.line());
                if !o.passed {
                    violations.push(name.to_string());
                }
                outcomes.push(o);
            }
            println!("{}/{} checks passed", outcomes.len() - violations.len(), outcomes.len());
            let Some(dir) = out else { return Ok(violations) };
            fs::create_dir_all(dir)?;
            let path = dir.join("check.json");
            write_atomic(&path, serde_json::to_string_pretty(&outcomes)?.as_bytes())?;
            (vec![path], dir.join("check.manifest.json"))
        }
    };
    RunManifest::new(cmd, started, artifacts)?.write(&manifest_path)?;
    Ok(violations)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    Ok(())
}

fn shape_or_ones(shape: Option<&[f64]>, d: usize) -> Result<Vec<f64>> {
    match shape {
        None => Ok(vec![1.0; d]),
        Some(s) if s.len() == d => Ok(s.to_vec()),
        Some(s) => usage(format!("--shape has {} entries, the data has d = {d}", s.len())),
    }
}

fn flow_config(tol: &FlowTolerances) -> FlowConfig {
    FlowConfig {
        rel_tol: tol.rel_tol,
        residual_tol: tol.residual_tol,
        max_time: tol.max_time,
        max_steps: tol.max_steps,
        ..FlowConfig::default()
    }
}

fn alpha_grid(g: &AlphaGrid) -> Vec<f64> {
    SweepSpec::log_grid(g.alpha_min, g.alpha_max, g.alpha_points)
}

fn sweep_spec(task: &SparseTask, depths: Vec<u32>, seed: u64) -> SweepSpec {
    SweepSpec {
        alpha_grid: alpha_grid(&task.alphas),
        depth_list: depths,
        n_grid: task.n_grid.clone(),
        trials: task.trials,
        target_risk: task.target,
        noise_std: task.noise,
        seed,
        solver: match task.solver {
            Solver::Dual => SweepSolver::Dual,
            Solver::Flow => SweepSolver::Flow,
        },
    }
}

fn star(r: &RecoveryRow) -> f64 {
    r.alpha_star.unwrap_or(0.0)
}

fn nondecreasing(vals: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = vals.collect();
    v.windows(2).all(|w| w[1] >= w[0])
}

type RatioRows = (Vec<Vec<String>>, Vec<(u32, f64)>);

fn ratio_curves(d: usize, depths: &[u32], lo: f64, hi: f64, points: usize, violations: &mut Violations) -> Result<RatioRows> {
    let floor = 1.0 / (d as f64).sqrt();
    let mut rows = Vec::new();
    let mut widths = Vec::new();
    for &depth in depths {
        let curve = l1_ratio_curve(lo, hi, points, depth, d)?;
        if !curve.windows(2).all(|w| w[1].1 >= w[0].1 * (1.0 - 1e-12)) {
            violations.push(format!("depth {depth}: ratio is not monotone in α"));
        }
        match transition_width(&curve, d) {
            Some(w) => widths.push((depth, w)),
            None => violations.push(format!("depth {depth}: the grid does not span the transition")),
        }
        rows.extend(curve.iter().map(|&(a, r)| {
            vec![depth.to_string(), d.to_string(), fmt_f64(a), fmt_f64(r), fmt_f64((r - floor) / (1.0 - floor))]
        }));
    }
    Ok((rows, widths))
}
