use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical routines and the experiment harness.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("rank {rank} exceeds min(d, k) = {max}")]
    Rank { rank: usize, max: usize },

    #[error("neighborhood size k = {k} requires at least {} points, got {n}", k + 1)]
    NeighborhoodSize { k: usize, n: usize },

    #[error("layer selection: {0}")]
    Selection(String),

    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("training diverged at step {step} (loss = {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } | LabError::Parse { .. } => 2,
            LabError::Divergence { .. } => 3,
            LabError::Io { .. } => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
