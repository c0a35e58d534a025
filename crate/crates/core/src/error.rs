use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped so the CLI can map them onto exit codes: configuration
/// problems, data problems, and runtime failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error at row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("class {class}: {message}")]
    Class { class: usize, message: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse failure category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Schema(_) => ErrorKind::Config,
            Error::Row { .. }
            | Error::Data(_)
            | Error::Dimension { .. }
            | Error::Class { .. }
            | Error::Split(_)
            | Error::Csv(_) => ErrorKind::Data,
            Error::Numerical(_) | Error::Training(_) | Error::Io { .. } | Error::Json(_) => {
                ErrorKind::Runtime
            }
        }
    }

    /// Process exit code: 1 config, 2 data, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Config => 1,
            ErrorKind::Data => 2,
            ErrorKind::Runtime => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
