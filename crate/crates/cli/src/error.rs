use std::path::PathBuf;

use thiserror::Error;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input {0} does not exist")]
    MissingInput(PathBuf),
    #[error("no sessions fall in the time window [{from:?}, {to:?})")]
    EmptyWindow { from: Option<u64>, to: Option<u64> },
    #[error("unknown ip {0}")]
    UnknownIp(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: BoxError,
    },
}

impl PipelineError {
    pub fn stage(stage: &'static str) -> impl FnOnce(BoxError) -> PipelineError {
        move |source| PipelineError::Stage { stage, source }
    }

    /// Name of the failing stage, if the error came from one.
    pub fn stage_name(&self) -> Option<&'static str> {
        match self {
            PipelineError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}
