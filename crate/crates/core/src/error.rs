use thiserror::Error;

pub type Result<T> = std::result::Result<T, TomoError>;

#[derive(Debug, Error)]
pub enum TomoError {
    #[error("invalid dimension {0}")]
    InvalidDimension(usize),
    #[error("invalid rank {rank} for dimension {dim}")]
    InvalidRank { rank: usize, dim: usize },
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("values sum to {0}, expected 1")]
    Normalization(f64),
    #[error("invalid state: {0}")]
    StateValidity(String),
    #[error("design is not informationally complete")]
    NotInformationallyComplete,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("need {needed} batches, got {got}")]
    InsufficientBatches { needed: usize, got: usize },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
