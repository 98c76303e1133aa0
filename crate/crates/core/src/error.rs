use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate estimate: reference block trace {trace:e} is too small to normalize")]
    DegenerateEstimate { trace: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("shot noise is only defined for Pauli ensembles, got `{0}`")]
    UnsupportedNoise(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("cannot summarize an empty result table")]
    EmptySummary,

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
