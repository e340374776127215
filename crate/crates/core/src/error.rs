use std::io;

use thiserror::Error;

/// Errors produced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: invalid UTF-8 input")]
    Ingest { line: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("cannot encode: {0}")]
    Encoding(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unknown word: {0}")]
    Lookup(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    /// A loss or parameter became NaN or infinite.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// True for failures of the optimization itself rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
