//! Error type shared by every module, with a coarse category per failure
//! class so binaries can map errors onto process exit codes.

use std::fmt;

/// Everything that can go wrong, grouped by what the caller should do about it.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor/layer shape disagreement or an out-of-contract argument.
    Shape(String),
    /// Invalid or contradictory configuration.
    Config(String),
    /// Dataset missing, malformed, or inconsistent.
    Data(String),
    /// NaN/Inf where a finite value is required, or a diverged run.
    NonFinite(String),
    /// Checkpoint unreadable, corrupt, or incompatible.
    Checkpoint(String),
    /// Filesystem failure (wraps the OS message).
    Io(String),
}

impl Error {
    /// Process exit code for binaries: config 2, data 3, numeric 4, checkpoint 5.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_) | Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::NonFinite(_) => 4,
            Error::Checkpoint(_) => 5,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::NonFinite(m) => write!(f, "numeric error: {m}"),
            Error::Checkpoint(m) => write!(f, "checkpoint error: {m}"),
            Error::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_category() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Data("x".into()).exit_code(), 3);
        assert_eq!(Error::NonFinite("x".into()).exit_code(), 4);
        assert_eq!(Error::Checkpoint("x".into()).exit_code(), 5);
    }
}
