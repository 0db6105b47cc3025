use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("frame integrity check failed (crc {found:08x}, expected {expected:08x})")]
    Integrity { expected: u32, found: u32 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("framing error: {0}")]
    Framing(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("transport error: {0}")]
    Transport(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
