use thiserror::Error;

/// Errors raised by the engines, oracles and instance I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate {index} is negative ({value})")]
    NegativeCoordinate { index: usize, value: f64 },

    #[error("invalid cost function: {0}")]
    InvalidCost(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("size guard exceeded: {0}; try a smaller instance")]
    SizeGuard(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("unsupported instance version `{0}` (this build reads \"v1\")")]
    UnsupportedVersion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
