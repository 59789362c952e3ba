use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corpus too short: {tokens} tokens, need at least {needed} for one block")]
    CorpusTooShort { tokens: usize, needed: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: String },

    #[error("empty tokenization: {0}")]
    EmptySentence(String),

    #[error("sequence of length {len} exceeds model context of {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("vocabulary mismatch: expected {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no challenges found in {0}")]
    NoChallenges(PathBuf),

    #[error("duplicate challenge uid {0}")]
    DuplicateChallenge(String),

    #[error("zero variance")]
    ZeroVariance,

    #[error("empty join between challenge sets")]
    EmptyJoin,

    #[error("missing depth annotation for {} pair(s): {}", .0.len(), .0.join(", "))]
    MissingAnnotations(Vec<String>),

    #[error("bad model file: {0}")]
    Format(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
