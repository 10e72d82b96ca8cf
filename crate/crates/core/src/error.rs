use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vector norm underflows (norm = {0:e})")]
    ZeroVector(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("point is antipodal to the chart center (inner product {0})")]
    AntipodalPoint(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("density normalization is unknown")]
    UnnormalizedDensity,

    #[error("proposal has unnormalized density {value} above envelope bound {bound}")]
    EnvelopeViolation { value: f64, bound: f64 },

    #[error("projection K^T Q x underflows (norm = {0:e})")]
    DegenerateProjection(f64),

    #[error("point-process truncation did not terminate within {0} atoms")]
    NonTermination(usize),

    #[error("requested {needed} atoms but only {available} are available")]
    InsufficientAtoms { needed: usize, available: usize },

    #[error("sample is empty or too small (need {needed}, got {got})")]
    EmptySample { needed: usize, got: usize },

    #[error("profile grid point x = {x} maps to rank {k} beyond context length {n}")]
    GridOutOfRange { x: f64, k: usize, n: usize },

    #[error("experiment supports only d = {supported}, got d = {got}")]
    UnsupportedDimension { supported: usize, got: usize },

    #[error("marginal density of the correlated token model is not available: {0}")]
    MarginalUnknown(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
