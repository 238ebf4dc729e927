use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position {0} is outside 1..=1500")]
    PositionOutOfRange(usize),

    #[error("payload length {0} is outside 1..=1500")]
    PayloadLength(usize),

    #[error("{len}-byte pattern at start {start} crosses byte 1500")]
    WindowOverflow { start: usize, len: usize },

    #[error("pattern must not be empty")]
    EmptyPattern,

    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: {msg}")]
    Validation { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
