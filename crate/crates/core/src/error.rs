use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("calibration failed: target mass {target} is not below the achievable maximum {max}")]
    Calibration { target: f64, max: f64 },

    #[error("degenerate group configuration: {0}")]
    DegenerateGroups(String),

    #[error("version space became empty in round {round}")]
    EmptyVersionSpace { round: usize },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("margin band is empty in round {round}; increase the per-round sample size")]
    EmptyBand { round: usize },

    #[error("incompatible configuration: {0}")]
    Incompatible(String),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Short machine-readable tag used in report flags.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Calibration { .. } => "calibration",
            Error::DegenerateGroups(_) => "degenerate_groups",
            Error::EmptyVersionSpace { .. } => "empty_version_space",
            Error::BudgetExceeded(_) => "budget_exceeded",
            Error::EmptyBand { .. } => "empty_band",
            Error::Incompatible(_) => "incompatible",
            Error::ConfigParse { .. } => "config_parse",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
        }
    }
}
