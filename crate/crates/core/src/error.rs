use thiserror::Error;

/// Errors raised by the numeric layers.
///
/// Residual-style failures (axiom checks) are not errors: they are reported
/// through [`crate::report::Report`]. Errors are reserved for malformed inputs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("jet depth {requested} exceeds the maximum of {max}")]
    DepthOverflow { requested: usize, max: usize },

    #[error("direction {direction} is out of range for depth {depth}")]
    DirectionOutOfRange { direction: usize, depth: usize },

    #[error("jet depths disagree: {0} vs {1}")]
    DepthMismatch(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("summands do not share a fiber (residual {residual:e})")]
    FiberMismatch { residual: f64 },

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("input leaves the algebra span (residual {residual:e})")]
    OutsideSpan { residual: f64 },

    #[error("initial element is not composable with the path (residual {residual:e})")]
    Composability { residual: f64 },

    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("{what} membership violated (residual {residual:e})")]
    Membership { what: String, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid fixture: {0}")]
    InvalidFixture(String),

    #[error("unknown catalog key `{0}`")]
    UnknownCatalogKey(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
