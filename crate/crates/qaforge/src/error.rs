//! Crate-wide error types.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Top-level error for corpus, pipeline, dataset, and eval operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid document {id}: {reason}")]
    InvalidDocument { id: String, reason: String },

    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("token count {0} outside supported range (0, 131072]")]
    TokenCountOutOfRange(u64),

    #[error("document {doc_id} too short: {available} fragments available, {wanted} demanded")]
    NotEnoughFragments {
        doc_id: String,
        wanted: usize,
        available: usize,
    },

    #[error("cannot build an index over an empty fragment list")]
    EmptyIndex,

    #[error("evidence not found in text")]
    EvidenceNotFound,

    #[error("configuration invalid:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("no backend bound for role {0}")]
    UnboundRole(String),

    #[error("prompt template for {role} is missing placeholder {placeholder}")]
    TemplatePlaceholder { role: String, placeholder: String },

    #[error("attrition report invalid: {0}")]
    Attrition(String),

    #[error("split ratios must sum to 1 (got {0})")]
    SplitRatios(f64),

    #[error("need at least {needed} documents for {needed} non-empty splits, got {got}")]
    TooFewDocuments { needed: usize, got: usize },

    #[error("sample size {k} exceeds available examples {available}")]
    SampleTooLarge { k: usize, available: usize },

    #[error("judgment references unknown example id {0}")]
    UnknownExample(String),

    #[error("id mismatches between predictions and examples: {0}")]
    IdMismatch(String),

    #[error("run interrupted")]
    Interrupted,

    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
