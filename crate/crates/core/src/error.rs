use thiserror::Error;

/// Errors produced by the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("timestamp gap at row {row}: expected one-hour step, got {hours} h")]
    Gap { row: usize, hours: i64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("series still has missing power at hour {0}")]
    IncompleteData(usize),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("no observed test points to evaluate")]
    EmptyEvaluation,

    #[error("maximum observed target is zero; NRMSE is undefined")]
    DegenerateNormalization,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
