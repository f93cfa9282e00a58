use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero-norm vector{}", row_suffix(.row))]
    ZeroNorm { row: Option<usize> },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("matrix has no rows")]
    EmptyMatrix,

    #[error("invalid temperature {0}: must be > 0")]
    InvalidTemperature(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("token id {token} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },

    #[error("sequence {index} is empty")]
    EmptySequence { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite input at position {0}")]
    NonFiniteInput(usize),

    #[error("{}:{line}: {reason}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("non-finite parameters after update at step {step}")]
    ChecksumMismatch { step: usize },

    #[error("training diverged at step {step}: {reason}")]
    DivergenceHalt { step: usize, reason: String },

    #[error("batch of {rows} rows too small for top-{top_k}")]
    BatchTooSmall { rows: usize, top_k: usize },

    #[error("embedding source exhausted: needs {needed}, has {available}")]
    SourceExhausted { needed: usize, available: usize },
}

fn row_suffix(row: &Option<usize>) -> String {
    match row {
        Some(r) => format!(" at row {r}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
