//! Error type for the command-line pipeline.
//!
//! Everything that can go wrong while ingesting files, parsing gene sets,
//! or orchestrating a batch maps onto [`CliError`]. The binary converts
//! any of these into exit code 2 (validation failure); exit code 0 is
//! reserved for complete, successful runs.

use std::path::PathBuf;

/// Failures surfaced by the command-line pipeline.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// An I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        /// File being read or written.
        path: PathBuf,
        /// Underlying I/O error.
        source: std::io::Error,
    },

    /// A file failed to parse; `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Parse {
        /// File being parsed.
        path: PathBuf,
        /// 1-based line number of the offending record.
        line: usize,
        /// What was wrong with it.
        message: String,
    },

    /// Inputs parsed but were not usable as given.
    #[error("{0}")]
    Invalid(String),

    /// A failure reported by the statistical core.
    #[error(transparent)]
    Core(#[from] corrdiff_core::Error),
}

impl CliError {
    /// Wraps an I/O error with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// A parse error at a 1-based line of `path`.
    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

/// Convenient alias used across the crate.
pub type Result<T, E = CliError> = std::result::Result<T, E>;
