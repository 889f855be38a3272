//! Pipelines behind the figure analogs: sparse-regression sweeps, penalty
//! transition curves, and the ReLU experiments.

pub mod relu;
pub mod sparse;
pub mod spline;

pub use relu::{
    grad_distance, init_relu, train_from, train_relu, GdConfig, GradDistanceForm, InitScheme, LayerScaling, ReluData, ReluMlp,
    ReluNet, ReluSetup, ReluStep, ReluTrainResult,
};
pub use sparse::{
    largest_alpha_for_recovery, population_risk, sweep_alpha_generalization, RecoveryRow, SweepRow, SweepSolver, SweepSpec,
    RECOVERY_HEADER, SWEEP_HEADER,
};
pub use spline::{
    circle_teacher_task, default_univariate_points, grad_distance_sweep, linear_spline, univariate_spline_report,
    GradDistanceRow, GradDistanceSpec, SplineReport, GRAD_DISTANCE_HEADER, SPLINE_GRID, SPLINE_HEADER,
};
