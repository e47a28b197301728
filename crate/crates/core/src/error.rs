use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size mismatch: {left} vs {right} particles")]
    SizeMismatch { left: usize, right: usize },

    #[error("cost guard: {what} = {value} exceeds limit {limit}")]
    CostGuard {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("quadrature did not converge within {nodes} nodes (relative error estimate {estimate:.3e})")]
    NonConvergence { nodes: usize, estimate: f64 },

    #[error("integration range is degenerate: {0}")]
    DegenerateRange(String),

    #[error("vanishing normalization: {0}")]
    ZeroNormalization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
