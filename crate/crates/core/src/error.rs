use thiserror::Error;

/// Error type shared across the whole laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("malformed corpus: {0}")]
    MalformedCorpus(String),

    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("learner not ready: {0}")]
    NotReady(String),

    #[error("not enough history: need generations {needed} for drift at g={g}")]
    NotEnoughHistory { g: usize, needed: String },

    #[error("invalid baseline: H_0 must be positive (got {0})")]
    InvalidBaseline(f64),

    #[error("random_tau schedule has no recorded trust sequence")]
    MissingTauSource,

    #[error("empty pool: {0}")]
    EmptyPool(String),

    #[error("checkpoint not found: {0}")]
    CheckpointNotFound(String),

    #[error("checkpoint decode error: {0}")]
    Decode(String),

    #[error("numerical divergence at generation {0}")]
    NumericalDivergence(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown quantity '{got}', valid: {valid}")]
    UnknownQuantity { got: String, valid: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
