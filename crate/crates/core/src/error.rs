use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{context}: accuracy target {requested:e} not reached, achieved error estimate {achieved:e}")]
    Accuracy {
        context: String,
        requested: f64,
        achieved: f64,
    },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite field value at step {step} (replica {replica})")]
    NumericalOverflow { step: usize, replica: u64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("enumeration bound exceeded: {outcomes} outcomes, limit {limit}")]
    EnumerationBound { outcomes: u128, limit: u128 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
