use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unit mismatch: expected {expected}, found {found}")]
    UnitMismatch { expected: String, found: String },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("infeasible battery power: p_b = {p_b} kW exceeds p_sc/4 = {limit} kW")]
    InfeasiblePower { p_b: f64, limit: f64 },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("schema error in {file}: {message}")]
    Schema { file: String, message: String },

    #[error("gap in {file}: missing timestamp {missing} (row {row})")]
    Gap { file: String, row: usize, missing: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("model artifact error: {0}")]
    Artifact(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable tag, used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract",
            Error::UnitMismatch { .. } => "unit_mismatch",
            Error::InsufficientHistory(_) => "insufficient_history",
            Error::InfeasiblePower { .. } => "infeasible_power",
            Error::Data(_) => "data",
            Error::Schema { .. } => "schema",
            Error::Gap { .. } => "gap",
            Error::Config(_) => "config",
            Error::Solver(_) => "solver",
            Error::Artifact(_) => "artifact",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
