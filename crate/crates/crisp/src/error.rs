use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("serialization error: {0}")]
    Serialize(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("proof rejected: {0}")]
    ProofRejected(String),

    #[error("release aborted: {0}")]
    ReleaseAborted(String),

    #[error("signature rejected")]
    BadSignature,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
