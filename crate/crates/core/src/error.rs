use thiserror::Error;

/// Errors raised by the core types, problems and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BimaxError {
    #[error("index {index} out of range for a set of {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("missing constant `{0}`")]
    MissingConstant(&'static str),

    #[error("matrix `{name}` is not symmetric positive definite (smallest eigenvalue {min_eig:e})")]
    NotPositiveDefinite { name: &'static str, min_eig: f64 },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T, E = BimaxError> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> BimaxError {
    BimaxError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
