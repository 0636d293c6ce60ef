use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate environment: {0}")]
    Degenerate(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("time {requested} exceeds available horizon {available}")]
    HorizonExceeded { requested: f64, available: f64 },

    #[error("too few samples: need at least {needed}, got {got}")]
    SampleSize { needed: usize, got: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("experiment replica {index} failed: {reason}")]
    Replica { index: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
