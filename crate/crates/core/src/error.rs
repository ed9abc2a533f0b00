//! Error type shared across the library and the CLI.

use std::fmt;

/// Library-wide error, grouped by how the CLI reports it.
#[derive(Debug)]
pub enum Error {
    /// Invalid parameter value (bad range, wrong combination of options).
    Parameter(String),
    /// Shape or size mismatch between grids/operators.
    Dimension(String),
    /// Malformed or truncated file, bad magic, header/payload disagreement.
    Format(String),
    /// Numeric failure at runtime: divergence, NaN/Inf in an iterate.
    Numeric(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI uses for this error class.
    ///
    /// 2 = usage/parameter/I-O, 3 = file format, 4 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Dimension(_) | Error::Io(_) => 2,
            Error::Format(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parameter(msg) => write!(f, "parameter error: {msg}"),
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}
