//! JSON shapes shared by the HTTP API and the CLI's `--json` output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{
    AnalyzeOutcome, ArtifactId, ContentType, EngineError, LogEvent, Provenance, Session, TransformError,
};
use crate::formats::ZipError;
use crate::inference::Origin;
use crate::llm::LlmError;
use crate::store::StoreError;
use crate::text::Finding;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactNode {
    pub id: ArtifactId,
    pub name: String,
    pub parent: Option<ArtifactId>,
    pub depth: usize,
    pub content_type: ContentType,
    pub size: usize,
    pub sha256: String,
    pub provenance: Provenance,
    pub metadata: BTreeMap<String, String>,
    pub children: Vec<ArtifactId>,
}

/// The artifact tree as a flat list in id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreePayload {
    pub session_id: String,
    pub root: Option<ArtifactId>,
    pub artifacts: Vec<ArtifactNode>,
}

impl TreePayload {
    pub fn of(session: &Session) -> Self {
        TreePayload {
            session_id: session.id().to_string(),
            root: session.root(),
            artifacts: session
                .artifacts()
                .map(|a| ArtifactNode {
                    id: a.id,
                    name: a.name.clone(),
                    parent: a.provenance.parent(),
                    depth: session.depth(a.id),
                    content_type: a.content_type,
                    size: a.data.len(),
                    sha256: hex::encode(Sha256::digest(&a.data)),
                    provenance: a.provenance.clone(),
                    metadata: a.metadata.clone(),
                    children: session.children(a.id).to_vec(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionPayload {
    pub text: String,
    pub rule: String,
    pub target: Option<ArtifactId>,
    /// Behavioral action that would satisfy the suggestion, e.g. `ViewedImports(a3)`.
    pub action: Option<String>,
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionsPayload {
    pub session_id: String,
    pub suggestions: Vec<SuggestionPayload>,
    /// Set when inference failed; the list is then empty.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SuggestionsPayload {
    pub fn of(session: &Session) -> Self {
        let names = |id: ArtifactId| session.display_name(id);
        let (suggestions, error) = match session.suggestions() {
            Ok(list) => (
                list.iter()
                    .map(|s| SuggestionPayload {
                        text: s.text.clone(),
                        rule: s.rule_name.clone(),
                        target: s.target,
                        action: s.action.as_ref().map(|a| a.to_string()),
                        provenance: s.provenance.iter().map(|f| f.atom().display_with(&names)).collect(),
                    })
                    .collect(),
                None,
            ),
            Err(e) => (Vec::new(), Some(e.to_string())),
        };
        SuggestionsPayload {
            session_id: session.id().to_string(),
            suggestions,
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactLine {
    pub fact: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingsPayload {
    pub session_id: String,
    pub findings: Vec<Finding>,
    /// Stored and derived facts, rendered with artifact names.
    pub facts: Vec<FactLine>,
}

impl FindingsPayload {
    pub fn of(session: &Session) -> Self {
        let names = |id: ArtifactId| session.display_name(id);
        FindingsPayload {
            session_id: session.id().to_string(),
            findings: session.findings().to_vec(),
            facts: session
                .all_facts()
                .iter()
                .map(|f| FactLine {
                    fact: f.atom().display_with(&names),
                    origin: f.origin,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzePayload {
    pub session_id: String,
    pub root: ArtifactId,
    pub tree: TreePayload,
    pub suggestions: SuggestionsPayload,
}

impl AnalyzePayload {
    pub fn of(session: &Session, root: ArtifactId) -> Self {
        AnalyzePayload {
            session_id: session.id().to_string(),
            root,
            tree: TreePayload::of(session),
            suggestions: SuggestionsPayload::of(session),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPayload {
    pub session_id: String,
    pub events: Vec<LogEvent>,
}

impl LogPayload {
    pub fn of(session: &Session) -> Self {
        LogPayload {
            session_id: session.id().to_string(),
            events: session.log().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionBody {
    pub action: String,
    pub target: ArtifactId,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionPayload {
    /// The behavioral fact recorded, absent for renames.
    pub fact: Option<String>,
    pub suggestions: SuggestionsPayload,
}

/// Result of a transform or a selection re-analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedPayload {
    pub artifact: ArtifactId,
    pub outcome: AnalyzeOutcome,
    pub suggestions: SuggestionsPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    NotFound,
    Range,
    Busy,
    Unsupported,
    WrongPassword,
    OverBudget,
    Corruption,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> u16 {
        match self {
            ErrorCode::NotFound => 404,
            ErrorCode::Range => 416,
            ErrorCode::Busy => 409,
            ErrorCode::Unsupported => 415,
            ErrorCode::WrongPassword => 422,
            ErrorCode::OverBudget => 413,
            ErrorCode::Corruption => 422,
            ErrorCode::Internal => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
        }
    }
}

fn transform_code(e: &TransformError) -> ErrorCode {
    match e {
        TransformError::Zip(ZipError::WrongPassword | ZipError::PasswordRequired(_)) => ErrorCode::WrongPassword,
        TransformError::Zip(ZipError::Corruption { .. }) => ErrorCode::Corruption,
        _ => ErrorCode::Unsupported,
    }
}

impl From<&EngineError> for ApiError {
    fn from(e: &EngineError) -> Self {
        let code = match e {
            EngineError::NotFound(_) => ErrorCode::NotFound,
            EngineError::Range { .. } => ErrorCode::Range,
            EngineError::Busy => ErrorCode::Busy,
            EngineError::Transform { source, .. } => transform_code(source),
            EngineError::InvalidArgument(_) | EngineError::Limit(_) | EngineError::RootExists | EngineError::Rules(_) => {
                ErrorCode::Unsupported
            }
            EngineError::Replay { .. } => ErrorCode::Corruption,
            EngineError::Inference(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        (&e).into()
    }
}

impl From<LlmError> for ApiError {
    fn from(e: LlmError) -> Self {
        let code = match &e {
            LlmError::Engine(inner) => return inner.into(),
            LlmError::OverBudget { .. } => ErrorCode::OverBudget,
            LlmError::Busy => ErrorCode::Busy,
            LlmError::InvalidBudget { .. } | LlmError::Transport(_) | LlmError::BadReply(_) | LlmError::Config(_) => {
                ErrorCode::Internal
            }
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::Engine(inner) => return inner.into(),
            StoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => ErrorCode::NotFound,
            StoreError::Io { .. } => ErrorCode::Internal,
            StoreError::Version(_) => ErrorCode::Unsupported,
            StoreError::Format(_) | StoreError::Corruption(_) => ErrorCode::Corruption,
        };
        ApiError::new(code, e.to_string())
    }
}
