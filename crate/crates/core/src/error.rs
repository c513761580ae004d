//! Crate-wide error type.

use std::fmt;

#[derive(Debug)]
pub enum Error {
    /// Invalid model/run configuration (dimension mismatch, bad flag combination, ...).
    Config(String),
    /// Invalid input data for an otherwise well-configured operation.
    Input(String),
    /// Malformed line in a data file.
    Parse { line: usize, msg: String },
    /// Non-finite values or divergence, with a diagnostic naming the culprit.
    Numeric(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
