use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("coincident points in the conditioning set of block {block}; jitter or deduplicate the locations")]
    DegenerateConditioning { block: usize },

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("dense computation refused: n = {n} exceeds the guard of {limit} (use --force-dense to override)")]
    DenseGuard { n: usize, limit: usize },

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("EM iteration {iteration}: {source}")]
    Em {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than by the caller's
    /// inputs (bad parameters, breakdowns, non-convergence).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Overflow(_)
            | Error::NotPositiveDefinite(_)
            | Error::DegenerateConditioning { .. }
            | Error::CgNotConverged { .. }
            | Error::Optimizer(_) => true,
            Error::Em { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
