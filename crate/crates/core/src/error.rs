use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("minimum is not attained: {0}")]
    UnattainedMinimum(String),

    #[error("degenerate kernel: every term of row {row} vanishes")]
    DegenerateKernel { row: usize },

    #[error("infeasible transport problem: {0}")]
    Infeasible(String),

    #[error("{method} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
        /// Last iterate, when one is meaningful for the caller.
        last: Option<Vec<f64>>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
