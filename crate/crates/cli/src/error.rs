use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: `{field}`: {message}")]
    Manifest {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: trajlab::error::Error,
    },

    #[error("missing artifacts in {dir}:\n{}", .missing.join("\n"))]
    MissingArtifacts { dir: PathBuf, missing: Vec<String> },

    #[error(transparent)]
    Core(#[from] trajlab::error::Error),
}

impl CliError {
    /// 2 for usage and schema problems, 1 for everything that failed while
    /// running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Manifest { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
