use thiserror::Error;

/// Errors raised by the controller library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("lifecycle error: {0}")]
    Lifecycle(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unknown edge: {0}")]
    UnknownEdge(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("trace version mismatch: expected {expected}, found {found}")]
    Version { expected: u32, found: String },

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
