use super::artifact::ArtifactId;
use super::identifier::TransformKind;
use super::transform::TransformError;
use crate::inference::{InferenceError, RuleError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("artifact {0} not found")]
    NotFound(ArtifactId),
    #[error("range offset {offset} length {length} exceeds artifact {id} of {size} bytes")]
    Range {
        id: ArtifactId,
        offset: u64,
        length: u64,
        size: u64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{kind} failed: {source}")]
    Transform {
        kind: TransformKind,
        #[source]
        source: TransformError,
    },
    #[error("session limit reached: {0}")]
    Limit(String),
    #[error("the session already has a root artifact")]
    RootExists,
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("event {seq} cannot be applied: {reason}")]
    Replay { seq: u64, reason: String },
    #[error("a chat request is already in flight for this session")]
    Busy,
}
