use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    /// Non-success HTTP status after all retries.
    #[error("endpoint returned HTTP {status} after {attempts} attempt(s): {body}")]
    Http { status: u16, attempts: u32, body: String },

    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("malformed chat response: {0}")]
    Protocol(String),

    #[error("gateway configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] agentask_core::Error),
}
