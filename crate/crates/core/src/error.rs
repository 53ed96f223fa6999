use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The annotation or manifest document could not be decoded.
    #[error("parse error in {record}: {message}")]
    Parse { record: String, message: String },

    /// Well-formed input that violates a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A caller-supplied argument is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Dice loss with an all-zero denominator.
    #[error("dice loss is undefined when both prediction and target are all zero")]
    UndefinedLoss,

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A graymap file that does not follow the 16-bit P5 layout.
    #[error("corrupt graymap {path}: {message}")]
    Graymap { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn parse(record: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            record: record.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the CLI: 1 for validation-class errors, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Graymap { .. } => 2,
            _ => 1,
        }
    }
}
