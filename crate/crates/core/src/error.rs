use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong in the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix did not have the length the operation needs.
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    /// Structurally invalid input (empty expert list, bad mask, ...).
    InvalidInput(String),
    /// A configuration value outside its legal range.
    InvalidConfig(String),
    /// A non-finite number where a finite one is required.
    NonFinite(String),
    /// A dataset does not match the declared schema.
    Schema(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                context,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch in {context}: expected {expected}, found {found}"
            ),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Schema(msg) => write!(f, "schema error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
