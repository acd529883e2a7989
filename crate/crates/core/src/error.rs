use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The request exceeds a hard size limit (e.g. the exact solver cutoff).
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// An operation was called in the wrong order, e.g. backward before forward.
    #[error("invalid state: {0}")]
    State(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
