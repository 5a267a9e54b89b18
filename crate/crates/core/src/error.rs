use std::fmt;

/// Library-wide error type.
#[derive(Debug, Clone)]
pub enum Error {
    /// A precondition on user-supplied arguments was violated.
    InvalidArgument(String),
    /// The linear solver could not produce a usable solution.
    SolverFailure(String),
    /// An internal invariant failed; indicates a bug, not bad input.
    Internal(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::SolverFailure(msg) => write!(f, "solver failure: {msg}"),
            Error::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
