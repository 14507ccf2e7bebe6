use thiserror::Error;

/// Errors raised by the laboratory routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resolution too low: {0}")]
    Resolution(String),

    #[error("size guard exceeded: {what} needs {needed}, cap is {cap}")]
    Guard {
        what: &'static str,
        needed: u128,
        cap: u128,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("blow-up detected at t = {time}")]
    BlowUp { time: f64 },

    #[error("io error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidArgument(msg.into())
}
