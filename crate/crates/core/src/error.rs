use thiserror::Error;

/// Errors raised by the discretization, solvers and optimizer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient out of bounds at element {element}: {value}")]
    CoefficientBounds { element: usize, value: f64 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("eigen iteration stagnated after {iterations} iterations (residual {residual:e})")]
    EigenStagnation { iterations: usize, residual: f64 },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
