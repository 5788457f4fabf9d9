use thiserror::Error;

/// Errors raised by analysis, phase reconstruction and synthesis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    /// The overlap sum of squared analysis taps vanishes somewhere, so no dual window exists.
    #[error("configuration is not invertible: window overlap denominator is zero at tap {tap}")]
    NonInvertible { tap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
