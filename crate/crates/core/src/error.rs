use thiserror::Error;

/// Errors produced by the segmentation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input bytes; `offset` is the byte position where parsing failed.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A label does not fit the requested output encoding.
    #[error("label {label} exceeds the {limit} limit of the output format")]
    LabelOverflow { label: u32, limit: u32 },

    /// An enumeration or allocation would exceed a fixed guard.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Configuration invariants violated.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
