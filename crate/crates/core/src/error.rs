use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("channel `{0}` has no present values")]
    UnrecoverableChannel(String),

    #[error("label schema error: {0}")]
    LabelSchema(String),

    #[error("variable `{0}` has zero variance")]
    DegenerateVariable(String),

    #[error("channel `{0}` is degenerate (zero spread)")]
    DegenerateChannel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("batch norm `{0}` has no running statistics yet")]
    UninitializedStats(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
