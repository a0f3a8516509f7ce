use thiserror::Error;

pub type Result<T> = std::result::Result<T, CatBondError>;

#[derive(Debug, Error)]
pub enum CatBondError {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("valuation time {t} is after maturity {maturity}")]
    TimeOrder { t: f64, maturity: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("no sign change of the tilt condition on [0, {upper}]")]
    RootNotBracketed { upper: f64 },

    #[error("operation requires {expected} severity")]
    UnsupportedSeverity { expected: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CatBondError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Self::InvalidParameter { name, reason: reason.into() }
    }
}
