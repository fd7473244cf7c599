use thiserror::Error;

/// Errors raised by the numerical kernels, the fixed-point engine and the optimizers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite matrix entry at index {0}")]
    NonFinite(usize),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("eigendecomposition did not converge within {iterations} sweeps")]
    EigNoConvergence { iterations: usize },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("power constraint violated: (1/t)Tr = {value} > 1")]
    PowerConstraint { value: f64 },

    #[error("stability margin 1 - s^4 g g~ = {0:e} is not positive")]
    Stability(f64),

    #[error("mode {index} has eigenvalue {eigenvalue:e}; cannot load power on it")]
    RankDeficient { index: usize, eigenvalue: f64 },

    #[error("degenerate implicit system (determinant {0:e})")]
    Degenerate(f64),

    #[error("negative SINR {value:e} on stream {stream}")]
    NegativeSinr { stream: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
