use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("cost gradient undefined: {0}")]
    Singular(&'static str),

    #[error("PSNR is infinite for identical images")]
    InfinitePsnr,

    #[error("cost kind `{0}` requires an image shape")]
    MissingImageShape(&'static str),

    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error("domain is unbounded along coordinate {0}")]
    UnboundedDomain(usize),

    #[error("stale potential cache: cached for weights {cached:?}, assigner is at {current}")]
    StaleCache { cached: Option<u64>, current: u64 },

    #[error("transport problem of {arcs} arcs exceeds the solver budget of {limit}")]
    BudgetExceeded { arcs: usize, limit: usize },

    #[error("infeasible weights: {0}")]
    InfeasibleWeights(String),

    #[error("idx: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("idx: {0}")]
    Idx(String),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
