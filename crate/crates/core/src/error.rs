use thiserror::Error;

/// Errors raised by the simulator, the solvers and the experiment pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The trajectory left the finite range; `state` is the last finite state.
    #[error("trajectory diverged at t = {time}: {message}")]
    Diverged { message: String, time: f64, state: Vec<f64> },

    #[error("infeasible system: {0}")]
    Infeasible(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
