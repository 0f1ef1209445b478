//! Error type shared by every pipeline stage.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("imputation error: column '{0}' has no observed values")]
    EmptyColumn(String),

    #[error("normalization error: non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty design: {0}")]
    EmptyDesign(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("model selection failed: {0}")]
    Selection(String),

    #[error("labeling error: {0}")]
    Labeling(String),

    #[error("interpretation error: {0}")]
    Interpretation(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse failure class, used by callers that map errors to exit codes.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Schema(_)
                | Error::Integrity(_)
                | Error::EmptyColumn(_)
                | Error::EmptyDesign(_)
                | Error::Stratification(_)
                | Error::DegenerateTarget(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
