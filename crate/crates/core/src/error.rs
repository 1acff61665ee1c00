use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} = {got} exceeds the supported limit {limit}")]
    TooLarge {
        what: &'static str,
        limit: u64,
        got: u64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "rejection sampling acceptance rate {rate:.2e} is below 1e-3; \
         integrate over a bounding region with indicator filtering instead"
    )]
    AcceptanceTooLow { rate: f64 },

    #[error("malformed instance: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
