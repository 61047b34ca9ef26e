use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A unit violates a dataset invariant. `row` is the zero-based unit index.
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("weak instrument: first-stage t statistic on the instrument is {t_stat:e}")]
    WeakInstrument { t_stat: f64 },

    #[error("non-finite log posterior at initialization of chain {chain}")]
    NonFiniteInit { chain: usize },

    #[error("estimand unavailable: {0}")]
    EstimandUnavailable(String),

    #[error("simulation aborted: {method} failed on {failed} of {total} replicates (first: {first})")]
    TooManyFailures { method: String, failed: usize, total: usize, first: String },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn params(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}
