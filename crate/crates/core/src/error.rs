use thiserror::Error;

/// Errors surfaced by any module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("gradient root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("input-gradient norm is exactly zero; penalty gradient undefined")]
    ZeroGradientNorm,

    #[error("noise multiplier sigma = 0 is non-private; pass the non-private flag to allow it")]
    NonPrivate,

    #[error("subsampling rate must lie in (0, 1), got {0}")]
    InvalidSamplingRate(f64),

    #[error("1/gamma = {0} is not an integer shard count")]
    NonIntegralShardCount(f64),

    #[error("privacy ledger has no accumulated steps")]
    EmptyLedger,

    #[error("privacy budget exceeded: epsilon {epsilon:.6} > ceiling {ceiling:.6} at step {step}")]
    BudgetExceeded {
        epsilon: f64,
        ceiling: f64,
        step: u64,
    },

    #[error("empty batch")]
    EmptyBatch,

    #[error("dataset of {size} points cannot be split into {shards} shards")]
    DatasetTooSmall { size: usize, shards: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("client {client} failed at step {step}")]
    ClientFailure { client: usize, step: u64 },

    #[error("server rejected unsanitized payload from client {0} in private mode")]
    UnsanitizedPayload(usize),

    #[error("wire frame malformed: {0}")]
    MalformedFrame(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
