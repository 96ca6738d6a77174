use thiserror::Error;

/// Errors raised across the reward pipeline, optimizer and simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate rollout id `{id}` in prompt `{prompt_id}`")]
    DuplicateId { id: String, prompt_id: String },

    #[error("zero-norm embedding{}", context.as_deref().map(|c| format!(" for `{c}`")).unwrap_or_default())]
    ZeroNorm { context: Option<String> },

    #[error("missing embeddings for ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
