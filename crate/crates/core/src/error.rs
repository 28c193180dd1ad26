use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

/// Errors surfaced by corpus handling, model training and evaluation.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate slot-key `{key}` in one candidate set")]
    DuplicateKey { key: String },

    #[error("query `{query}`: {tokens} tokens but {keys} keys")]
    LengthMismatch {
        query: String,
        tokens: usize,
        keys: usize,
    },

    #[error("unknown slot-key `{key}`")]
    UnknownKey { key: String },

    #[error("empty corpus after filtering")]
    EmptyCorpus,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("candidate-set enumeration would produce {count} sets (limit {max})")]
    TooManySets { count: u128, max: usize },

    #[error("no candidate slot-sets to select from")]
    NoCandidateSets,

    #[error("empty catalog")]
    EmptyCatalog,

    #[error("no overlapping queries between predictions and gold")]
    NoOverlap,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
