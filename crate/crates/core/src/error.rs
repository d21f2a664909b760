use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    /// Non-finite values were met in input data or during iteration.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// A structural invariant (symmetry, zero diagonal, unit rows, ...) does not hold.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// A file could be read but its contents do not parse.
    #[error("malformed file {path:?}: field `{field}`: {reason}")]
    Malformed {
        path: PathBuf,
        field: String,
        reason: String,
    },

    #[error("problem too large: {0}")]
    TooLarge(String),

    /// A retraction produced a zero row; the step must be shrunk.
    #[error("degenerate retraction step at row {row}")]
    DegenerateStep { row: usize },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::TooLarge(_) => 1,
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
