//! Interactive chat and one-shot analytical actions.
//!
//! A request is split in two so a server can drop its session lock while the
//! client call runs: [`prepare_chat`] builds the prompt and marks the session
//! busy, [`finish_chat`] records the outcome.

use serde::{Deserialize, Serialize};

use super::client::{ChatClient, ChatRequest};
use super::context::build_context;
use super::prompt::{optimize_prompt, Prompt, PromptBudget};
use super::LlmError;
use crate::config::LlmConfig;
use crate::engine::{ArtifactId, ChatRole, ChatTurn, EngineError, ExchangeKind, Note, NoteKind, Session, SessionEvent};
use crate::inference::{Fact, Term};

/// Prior turns sent along with a chat question.
pub const HISTORY_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoActionKind {
    ExplainArtifact,
    SuggestRename,
    SummarizeFindings,
}

impl AutoActionKind {
    pub fn exchange(self) -> ExchangeKind {
        match self {
            AutoActionKind::ExplainArtifact => ExchangeKind::ExplainArtifact,
            AutoActionKind::SuggestRename => ExchangeKind::SuggestRename,
            AutoActionKind::SummarizeFindings => ExchangeKind::SummarizeFindings,
        }
    }

    pub fn question(self) -> &'static str {
        match self {
            AutoActionKind::ExplainArtifact => {
                "Explain what the focused artifact is and what it is likely to do, in one short paragraph."
            }
            AutoActionKind::SuggestRename => {
                "Propose a short descriptive file name for the focused artifact. Reply with the name only, on a single line."
            }
            AutoActionKind::SummarizeFindings => {
                "Summarize the findings and indicators in the context as a short list, most important first."
            }
        }
    }
}

impl std::str::FromStr for AutoActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            AutoActionKind::ExplainArtifact,
            AutoActionKind::SuggestRename,
            AutoActionKind::SummarizeFindings,
        ]
        .into_iter()
        .find(|k| format!("{k:?}").eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown auto action {s:?}"))
    }
}

/// A request whose prompt is built and whose session is marked busy.
#[derive(Debug, Clone)]
pub struct PendingChat {
    pub exchange: ExchangeKind,
    pub focus: ArtifactId,
    pub question: String,
    pub prompt: Prompt,
    pub request: ChatRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatOutcome {
    pub exchange: ExchangeKind,
    pub focus: ArtifactId,
    pub reply: String,
    pub prompt: String,
    pub template_version: String,
    pub included_items: usize,
    pub prompt_units: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<Note>,
    /// Name proposed by `SuggestRename`; applied only through `apply_rename`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposal: Option<String>,
}

pub fn prepare_chat(
    session: &mut Session,
    config: &LlmConfig,
    exchange: ExchangeKind,
    focus: ArtifactId,
    question: &str,
) -> Result<PendingChat, LlmError> {
    if session.is_chat_pending() {
        return Err(LlmError::Busy);
    }
    let artifact = session.artifact(focus)?;
    if question.trim().is_empty() {
        return Err(EngineError::InvalidArgument("question must not be empty".into()).into());
    }
    if exchange == ExchangeKind::SuggestRename && artifact.name.trim().is_empty() {
        return Err(EngineError::InvalidArgument("artifact has no name to improve on".into()).into());
    }
    let budget = PromptBudget::new(config.budget.max_units, config.budget.reserve)?;
    let items = build_context(session, focus, &config.weights)?;
    let prompt = optimize_prompt(&items, &budget, question)?;

    let mut messages = Vec::new();
    if exchange == ExchangeKind::Chat {
        let history = session.chat_history();
        messages.extend_from_slice(&history[history.len().saturating_sub(HISTORY_WINDOW)..]);
    }
    messages.push(ChatTurn {
        role: ChatRole::User,
        text: prompt.text.clone(),
    });
    session.set_chat_pending(true);
    Ok(PendingChat {
        exchange,
        focus,
        question: question.to_string(),
        request: ChatRequest {
            model: config.model.clone(),
            messages,
            max_reply_units: budget.reserve_for_reply,
        },
        prompt,
    })
}

/// Records the client's answer. A failure is logged as an error event and
/// returned; nothing else changes.
pub fn finish_chat(
    session: &mut Session,
    pending: PendingChat,
    result: Result<String, LlmError>,
) -> Result<ChatOutcome, LlmError> {
    session.set_chat_pending(false);
    let PendingChat {
        exchange,
        focus,
        question,
        prompt,
        ..
    } = pending;
    let result = result.and_then(|r| {
        let r = r.trim().to_string();
        if r.is_empty() {
            Err(LlmError::BadReply("empty reply".into()))
        } else {
            Ok(r)
        }
    });
    let reply = match result {
        Ok(r) => r,
        Err(e) => {
            session.commit(SessionEvent::ChatExchanged {
                exchange,
                focus,
                question,
                prompt: prompt.text,
                template_version: prompt.template_version,
                reply: None,
                error: Some(e.to_string()),
                note: None,
                fact: None,
            })?;
            return Err(e);
        }
    };

    let note_of = |kind| {
        Some(Note {
            artifact: focus,
            kind,
            text: reply.clone(),
        })
    };
    let (note, proposal) = match exchange {
        ExchangeKind::Chat => (None, None),
        ExchangeKind::ExplainArtifact => (note_of(NoteKind::Explanation), None),
        ExchangeKind::SummarizeFindings => (note_of(NoteKind::Summary), None),
        ExchangeKind::SuggestRename if reply.lines().count() == 1 => (None, Some(reply.clone())),
        ExchangeKind::SuggestRename => (note_of(NoteKind::Reply), None),
    };
    let fact = Fact::behavioral("RanChat", vec![Term::Artifact(focus)]);
    session.commit(SessionEvent::ChatExchanged {
        exchange,
        focus,
        question,
        prompt: prompt.text.clone(),
        template_version: prompt.template_version.clone(),
        reply: Some(reply.clone()),
        error: None,
        note: note.clone(),
        fact: Some(fact),
    })?;
    session.refresh();
    Ok(ChatOutcome {
        exchange,
        focus,
        reply,
        prompt: prompt.text,
        template_version: prompt.template_version,
        included_items: prompt.included,
        prompt_units: prompt.units,
        note,
        proposal,
    })
}

pub fn chat(
    session: &mut Session,
    client: &dyn ChatClient,
    config: &LlmConfig,
    focus: ArtifactId,
    question: &str,
) -> Result<ChatOutcome, LlmError> {
    let pending = prepare_chat(session, config, ExchangeKind::Chat, focus, question)?;
    let result = client.complete(&pending.request);
    finish_chat(session, pending, result)
}

pub fn auto_action(
    session: &mut Session,
    client: &dyn ChatClient,
    config: &LlmConfig,
    focus: ArtifactId,
    kind: AutoActionKind,
) -> Result<ChatOutcome, LlmError> {
    let pending = prepare_chat(session, config, kind.exchange(), focus, kind.question())?;
    let result = client.complete(&pending.request);
    finish_chat(session, pending, result)
}
