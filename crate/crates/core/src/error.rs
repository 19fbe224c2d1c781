use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("training failure: {0}")]
    TrainingFailure(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: u64, message: String },

    #[error("invalid model payload: {0}")]
    Payload(String),

    #[error("round {got} received after round {last}")]
    OutOfOrderRound { last: usize, got: usize },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid trace: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
