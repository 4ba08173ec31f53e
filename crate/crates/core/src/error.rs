use thiserror::Error;

/// Errors surfaced by the library and the command-line harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's preconditions.
    #[error("usage error: {0}")]
    Usage(String),
    /// Input data is empty, malformed or inconsistent.
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub(crate) fn data(msg: impl Into<String>) -> Error {
    Error::Data(msg.into())
}
