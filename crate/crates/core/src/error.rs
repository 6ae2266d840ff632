use std::io;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid format: {0}")]
    Format(String),
    #[error("truncated input: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("weight validation failed: {0}")]
    Validation(String),
    #[error("model hash mismatch: stream was encoded with {expected:016x}, model is {found:016x}")]
    ModelMismatch { expected: u64, found: u64 },
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("non-finite distribution parameters")]
    NonFinite,
    #[error("weight set is already sheared")]
    AlreadySheared,
    #[error("internal error: {0}")]
    Internal(String),
    #[error("image error: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
