use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "regime", version)]
#[command(about = "Gradient-flow simulator, implicit-bias solvers and experiment pipelines")]
pub struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Re-run the command recorded in a run manifest.
    #[arg(long, value_name = "MANIFEST")]
    pub rerun: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct OutDir {
    /// Artifact directory.
    #[arg(long, env = "REGIME_ARTIFACT_ROOT", default_value = "artifacts")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AlphaGrid {
    #[arg(long, default_value_t = 1e-3)]
    pub alpha_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub alpha_max: f64,
    #[arg(long, default_value_t = 17)]
    pub alpha_points: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SparseTask {
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long, default_value_t = 5)]
    pub r_star: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Sample sizes for the recovery thresholds.
    #[arg(long, value_delimiter = ',', default_value = "30,50,80")]
    pub n_grid: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Excess risk counted as recovery.
    #[arg(long, default_value_t = 0.025)]
    pub target: f64,
    #[arg(long, value_enum, default_value_t = Solver::Dual)]
    pub solver: Solver,
    #[command(flatten)]
    #[serde(flatten)]
    pub alphas: AlphaGrid,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Penalty minimizer (same limit as the flow, faster).
    Dual,
    Flow,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Depth-2 penalty minimizer; uses --alpha and --shape.
    Q2,
    /// Depth-D penalty minimizer; uses --alpha and --depth.
    Qd,
    L1,
    L2,
    /// Shape-weighted minimum ℓ2; uses --shape.
    Wl2,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FlowTolerances {
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub residual_tol: f64,
    #[arg(long, default_value_t = 1e8)]
    pub max_time: f64,
    #[arg(long, default_value_t = 2_000_000)]
    pub max_steps: usize,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Sample a sparse regression instance to CSV (plus a JSON sidecar).
    Generate {
        #[arg(long)]
        d: usize,
        #[arg(long = "n", visible_alias = "N")]
        n: usize,
        #[arg(long, default_value_t = 5)]
        r_star: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        seed: u64,
        /// Dataset CSV to write.
        #[arg(long)]
        output: PathBuf,
    },
    /// Integrate the diagonal-network gradient flow on a dataset.
    Flow {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2)]
        depth: u32,
        #[arg(long)]
        alpha: f64,
        /// Per-coordinate shape (default all ones).
        #[arg(long, value_delimiter = ',')]
        shape: Option<Vec<f64>>,
        #[command(flatten)]
        #[serde(flatten)]
        tol: FlowTolerances,
        /// Also write the trajectory (with β) as CSV.
        #[arg(long)]
        trace: bool,
        /// Write flow.json and the manifest here; JSON always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a constrained minimization over the interpolating set.
    Solve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 3)]
        depth: u32,
        #[arg(long, value_delimiter = ',')]
        shape: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scalar penalties q2, q_D and r2 on a log grid of z.
    PenaltyTable {
        #[arg(long, default_value_t = 1e-3)]
        z_min: f64,
        #[arg(long, default_value_t = 1e3)]
        z_max: f64,
        #[arg(long, default_value_t = 61)]
        points: usize,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutDir,
    },
    /// Rank-one matrix completion over an (α²k, k) grid.
    Phase {
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long = "n", visible_alias = "N", default_value_t = 60)]
        n_obs: usize,
        /// Values of α²k.
        #[arg(long, value_delimiter = ',', default_value = "1e-3,1e-2,1e-1,1,10,100")]
        lifted_scales: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "400")]
        ks: Vec<usize>,
        #[arg(long)]
        seed: u64,
        /// Seeds are seed, seed+1, …
        #[arg(long, default_value_t = 3)]
        reps: u64,
        /// Fixed stepsize 1e-5 in place of the adaptive rule.
        #[arg(long)]
        fixed_step: bool,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutDir,
    },
    /// Sparse regression: risk vs α and the largest recovering α per N.
    Fig1 {
        #[command(flatten)]
        #[serde(flatten)]
        task: SparseTask,
        /// Sample sizes for the risk-vs-α curves.
        #[arg(long, value_delimiter = ',', default_value = "40")]
        curve_n: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        depth: u32,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutDir,
    },
    /// Ratio Q(e₁)/Q(1/√d) against α for several depths, and the penalty table.
    Fig2 {
        #[arg(long, default_value_t = 100)]
        d: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,3,6")]
        depths: Vec<u32>,
        #[arg(long, default_value_t = 1e-12)]
        alpha_min: f64,
        #[arg(long, default_value_t = 1e6)]
        alpha_max: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutDir,
    },
    /// Largest recovering α^D per N for several depths, with ratio curves.
    Fig4 {
        #[command(flatten)]
        #[serde(flatten)]
        task: SparseTask,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        depths: Vec<u32>,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutDir,
    },
    /// Grad distance on the circle teacher task.
    Fig5 {
        #[arg(long, value_delimiter = ',', default_value = "2")]
        depths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.25,1,4")]
        alphas: Vec<f64>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        reps: u64,
        #[arg(long, default_value_t = 30)]
        width: usize,
        #[arg(long, default_value_t = 10)]
        n_train: usize,
        #[arg(long, default_value_t = 500)]
        n_test: usize,
        /// Train a single copy instead of the zero-output twin pair.
        #[arg(long)]
        no_twin: bool,
        /// Fixed stepsize 0.01.
        #[arg(long)]
        fixed_step: bool,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutDir,
    },
    /// Univariate two-layer ReLU fits against the linear spline.
    Fig8 {
        #[arg(long, default_value_t = 1000)]
        width: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.01,100")]
        alphas: Vec<f64>,
        #[arg(long)]
        seed: u64,
        /// Width 10000 and fixed stepsize 0.01.
        #[arg(long)]
        full_scale: bool,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutDir,
    },
    /// Run the acceptance checks and print a pass/fail table.
    Check {
        /// Restrict to these checks (repeatable).
        #[arg(long)]
        only: Vec<String>,
        /// Also write check.json and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Flow { .. } => "flow",
            Command::Solve { .. } => "solve",
            Command::PenaltyTable { .. } => "penalty-table",
            Command::Phase { .. } => "phase",
            Command::Fig1 { .. } => "fig1",
            Command::Fig2 { .. } => "fig2",
            Command::Fig4 { .. } => "fig4",
            Command::Fig5 { .. } => "fig5",
            Command::Fig8 { .. } => "fig8",
            Command::Check { .. } => "check",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Generate { seed, .. }
            | Command::Phase { seed, .. }
            | Command::Fig1 { seed, .. }
            | Command::Fig4 { seed, .. }
            | Command::Fig5 { seed, .. }
            | Command::Fig8 { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}
