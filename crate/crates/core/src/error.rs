use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("training data contains a single class ({0}); both benign and malware rows are required")]
    SingleClass(&'static str),

    #[error("no usable input: {0}")]
    EmptyInput(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{what} version mismatch: file has {found:?}, this build reads {expected:?}")]
    VersionMismatch {
        what: &'static str,
        found: String,
        expected: String,
    },

    #[error("non-finite parameter in {0} after optimizer step")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// Process exit code: 1 usage, 2 data error, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io { .. }
            | Error::SingleClass(_)
            | Error::EmptyInput(_)
            | Error::Format { .. }
            | Error::VersionMismatch { .. }
            | Error::Shape { .. }
            | Error::Domain(_) => 2,
            Error::NonFinite(_) => 3,
        }
    }
}
