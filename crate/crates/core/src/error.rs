use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid ledger: {0}")]
    InvalidLedger(String),

    #[error("degenerate feature: row {row} has zero norm")]
    DegenerateFeature { row: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid label {label} (num_classes = {num_classes})")]
    InvalidLabel { label: usize, num_classes: usize },

    #[error("data inconsistency: {0}")]
    DataInconsistency(String),

    #[error("budget: {0}")]
    Budget(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("round {round}: {source}")]
    InRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable class name, used by the command line on failure.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidLedger(_) => "invalid-ledger",
            Error::DegenerateFeature { .. } => "degenerate-feature",
            Error::Shape(_) => "shape",
            Error::InvalidLabel { .. } => "invalid-label",
            Error::DataInconsistency(_) => "data-inconsistency",
            Error::Budget(_) => "budget",
            Error::Divergence(_) => "divergence",
            Error::Infeasible(_) => "infeasible",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::InRound { source, .. } => source.class(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_round(round: usize, source: Error) -> Self {
        Error::InRound {
            round,
            source: Box::new(source),
        }
    }
}
