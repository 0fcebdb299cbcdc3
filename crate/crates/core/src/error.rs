//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("target probability {0} outside the invertible domain [0, 1)")]
    OutOfDomain(f64),

    #[error("model is not invertible: {0}")]
    NonInvertible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("malformed stream: {0}")]
    MalformedStream(String),

    #[error("empty setting: {0}")]
    EmptySetting(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("chain too short: {0}")]
    ChainTooShort(String),

    #[error("degenerate chain: {0}")]
    DegenerateChain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
