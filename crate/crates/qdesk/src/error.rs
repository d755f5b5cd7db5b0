use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Caller-supplied value outside the operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// Fock truncation too small for the requested state or evolution.
    #[error("truncation: {0}")]
    Truncation(String),
    /// A numerical guard tripped (non-convergence, degenerate divisor, overflow guard).
    #[error("numerical guard: {0}")]
    NumericalGuard(String),
}

impl Error {
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Truncation(_) | Error::NumericalGuard(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn guard(msg: impl Into<String>) -> Error {
    Error::NumericalGuard(msg.into())
}
