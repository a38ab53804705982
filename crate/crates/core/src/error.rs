use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("unknown term {term:?}; closest vocabulary matches: {suggestions:?}")]
    UnknownTerm {
        term: String,
        suggestions: Vec<String>,
    },

    #[error("index out of range: {0}")]
    OutOfRange(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used for machine-readable CLI output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io_error",
            Error::MalformedRow { .. } | Error::Csv(_) => "malformed_input",
            Error::Json { .. } => "malformed_json",
            Error::Invalid(_) => "invalid_input",
            Error::Shape(_) => "shape_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::Checksum(_) => "checksum_mismatch",
            Error::Version { .. } => "version_mismatch",
            Error::UnknownTerm { .. } => "unknown_term",
            Error::OutOfRange(_) => "out_of_range",
        }
    }

    /// Whether the failure is a validation problem with the user's inputs
    /// (as opposed to a runtime failure).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::Shape(_)
                | Error::OutOfRange(_)
                | Error::UnknownTerm { .. }
                | Error::MalformedRow { .. }
                | Error::Version { .. }
        )
    }
}
