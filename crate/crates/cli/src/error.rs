use std::path::PathBuf;

use gs_infonce::Error as CoreError;

/// Stable process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
    pub const DEGENERATE: i32 = 5;
    pub const TOLERANCE: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("gradient check failed: max relative error {max_relative_error:e} exceeds {tolerance:e} (worst instance seed {worst_seed})")]
    Tolerance {
        max_relative_error: f64,
        tolerance: f64,
        worst_seed: u64,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Tolerance { .. } => exit::TOLERANCE,
            CliError::Core(e) => match e {
                CoreError::InvalidConfig(_)
                | CoreError::InvalidTemperature(_)
                | CoreError::BatchTooSmall { .. }
                | CoreError::SourceExhausted { .. }
                | CoreError::DimensionMismatch { .. } => exit::CONFIG,
                CoreError::Io { .. } | CoreError::Parse { .. } | CoreError::BadCheckpoint(_) => exit::IO,
                CoreError::DivergenceHalt { .. } | CoreError::ChecksumMismatch { .. } | CoreError::NonFinite { .. } => {
                    exit::DIVERGENCE
                }
                CoreError::DegenerateInput(_)
                | CoreError::ZeroNorm { .. }
                | CoreError::EmptyMatrix
                | CoreError::TokenOutOfRange { .. }
                | CoreError::EmptySequence { .. }
                | CoreError::LengthMismatch { .. }
                | CoreError::NonFiniteInput(_) => exit::DEGENERATE,
            },
        }
    }
}
