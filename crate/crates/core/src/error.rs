use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed for {entity}: {reason}")]
    Validation { entity: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("infeasible path: path length {path_length} m does not exceed LoS distance {los_distance} m")]
    InfeasiblePath { path_length: f64, los_distance: f64 },

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("covariance rank {rank} is too small for {n_sources} sources")]
    NumericalRank { rank: usize, n_sources: usize },

    #[error("invalid state: {0}")]
    State(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("scenario parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn validation(entity: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            entity: entity.into(),
            reason: reason.into(),
        }
    }
}
