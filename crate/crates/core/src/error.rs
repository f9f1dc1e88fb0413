use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error at line {line}: {message}")]
    Schema { line: u64, message: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite loss at iteration {iteration} (lr={lr})")]
    NonFiniteLoss { iteration: u64, lr: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("checkpoint not found: {}", .0.display())]
    CheckpointNotFound(PathBuf),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 2,
            Error::Parse { .. }
            | Error::Schema { .. }
            | Error::EmptyDataset(_)
            | Error::Shape(_)
            | Error::DegenerateInput(_) => 3,
            Error::NonFiniteLoss { .. } | Error::Contract(_) => 4,
            Error::Io { .. } | Error::CheckpointNotFound(_) | Error::Checkpoint(_) => 5,
        }
    }

    /// Short machine-parsable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::Shape(_) => "shape",
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::Config(_) => "config",
            Error::NonFiniteLoss { .. } => "numerical",
            Error::Contract(_) => "contract",
            Error::CheckpointNotFound(_) => "checkpoint_not_found",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }
}
