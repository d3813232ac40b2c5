//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("outcome at row {row} is {value}, but the logistic link requires outcomes in {{0, 1}}")]
    NonBinaryOutcome { row: usize, value: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate outcome vector: all outcomes are {value}")]
    DegenerateOutcomes { value: f64 },

    #[error("solver did not converge within {iterations} iterations (final objective {objective:.6e})")]
    SolverDidNotConverge { iterations: usize, objective: f64 },

    #[error("uncertainty set is infeasible: minimal attainable loss {min_loss:.6e} exceeds tau {tau:.6e}")]
    InfeasibleSet { min_loss: f64, tau: f64 },

    #[error("model bank is empty")]
    EmptyBank,

    #[error("AUC requires at least one positive and one negative label")]
    SingleClassLabels,

    #[error("AUC table is missing entry (train={train}, eval={eval})")]
    MissingAucEntry { train: i64, eval: i64 },

    #[error("denominator nonpositive at t={t}: diagonal AUC {auc} must exceed 0.5")]
    NonpositiveDenominator { t: i64, auc: f64 },

    #[error("no evaluation periods after train period {train}")]
    NoFutureEntries { train: i64 },

    #[error("case-control downsampling requires at least one case (y=1)")]
    NoCases,

    #[error("split produced an empty side (n={n}, fraction={fraction})")]
    DegenerateSplit { n: usize, fraction: f64 },

    #[error("CSV schema error in {path}: {message}")]
    CsvSchema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
