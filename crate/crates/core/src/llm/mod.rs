//! LLM assistance: relevance-ranked context, budgeted prompts, chat and
//! one-shot actions behind a pluggable client.

pub mod chat;
pub mod client;
pub mod context;
pub mod prompt;

pub use chat::{auto_action, chat, finish_chat, prepare_chat, AutoActionKind, ChatOutcome, PendingChat, HISTORY_WINDOW};
pub use client::{client_from_config, extract_reply, ChatClient, ChatRequest, HttpClient, MockClient};
pub use context::{build_context, clip, rank, score, tree_distance, ContextItem, ContextSource, ItemKind, MAX_ITEM_CHARS};
pub use prompt::{fixed_units, item_cost, optimize_prompt, units, Prompt, PromptBudget, PREAMBLE, TEMPLATE_VERSION};

use crate::engine::EngineError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("prompt needs {needed} units but only {available} are available")]
    OverBudget { needed: usize, available: usize },
    #[error("invalid budget: max_units {max_units} must exceed reserve {reserve}, which must be positive")]
    InvalidBudget { max_units: usize, reserve: usize },
    #[error("a chat request is already in flight for this session")]
    Busy,
    #[error("chat transport failed: {0}")]
    Transport(String),
    #[error("unusable reply: {0}")]
    BadReply(String),
    #[error("llm configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(EngineError),
}

impl From<EngineError> for LlmError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Busy => LlmError::Busy,
            e => LlmError::Engine(e),
        }
    }
}
