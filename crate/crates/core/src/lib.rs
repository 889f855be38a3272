//! Gradient-flow simulation of homogeneous models and the solvers for their
//! implicit-regularization minimizers.

pub mod checks;
pub mod data;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod linalg;
pub mod matfac;
pub mod minimizers;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod regularizers;
pub mod rng;

pub use data::{generate_sparse_regression, DatasetManifest, RegressionDataset};
pub use error::{Error, Result};
pub use flow::{FlowConfig, FlowResult};
pub use minimizers::ConstrainedSolution;
pub use model::{loss, DiagonalNetwork, LinearPredictor, UVNetwork};
pub use regularizers::{RegularizerSpec, ScalarPenalty};
pub use rng::SeededRng;
