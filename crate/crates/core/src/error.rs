use thiserror::Error;

/// Errors raised by the numerical kernels and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("Newton iteration for Gauss-Legendre root {index} of P_{degree} did not converge")]
    NonConvergence { degree: usize, index: usize },

    #[error("operation requires a Gaussian grid")]
    NonGaussianGrid,

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("filter support is empty for output latitude {0}; cutoff smaller than grid spacing")]
    EmptySupport(usize),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(&'static str),

    #[error("split bookkeeping mismatch: {0}")]
    Bookkeeping(String),

    #[error("auxiliary provider exhausted at step {0}")]
    ProviderExhausted(usize),

    #[error(transparent)]
    Format(#[from] crate::io::FormatError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(expected: impl ToString, found: impl ToString) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
