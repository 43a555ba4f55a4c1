use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is rank deficient: rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("resource limit exceeded: {what} (cap {cap})")]
    ResourceLimit { what: &'static str, cap: u64 },

    #[error("no stopping set of size <= {0} exists")]
    NoStoppingSet(usize),

    #[error("weight class {0} is empty")]
    EmptyWeightClass(usize),

    #[error("catalog has no stopping sets")]
    EmptyCatalog,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("edge already present or not allowed: {0}")]
    InvalidEdge(String),

    #[error("LP is infeasible")]
    LpInfeasible,

    #[error("LP is unbounded")]
    LpUnbounded,

    #[error("LP numerical failure: {0}")]
    LpNumerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("malformed decoder input: {0}")]
    MalformedInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
