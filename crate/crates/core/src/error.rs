use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a type invariant; `path` locates the offending field.
    #[error("invalid {path}: {reason}")]
    Validation { path: String, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{context}: matrix is not symmetric positive definite")]
    NotPositiveDefinite { context: String },

    /// The accumulated M-step system for a given point could not be factorized.
    #[error("M-step system for point {row} is not positive definite")]
    MStepNotPositiveDefinite { row: usize },

    #[error("no finite log-density term for point {row}")]
    Underflow { row: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("unsupported covariance model {0} for fitting")]
    UnsupportedModel(String),

    #[error("operation requires d = {required}, got d = {found}")]
    UnsupportedDimension { required: usize, found: usize },

    #[error("empty mode set")]
    EmptyModeSet,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
