use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::artifact::{Artifact, ArtifactId};
use crate::inference::Fact;
use crate::text::Finding;

/// Analyst actions recorded as behavioral facts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BehavioralAction {
    Opened,
    ViewedHex,
    ViewedStrings,
    ViewedImports,
    ViewedMacros,
    ViewedEntropy,
    ViewedStructure,
    MarkedIoc,
    RanChat,
    AppliedTransform,
    ExtractedChild,
}

impl BehavioralAction {
    pub const ALL: [BehavioralAction; 11] = [
        BehavioralAction::Opened,
        BehavioralAction::ViewedHex,
        BehavioralAction::ViewedStrings,
        BehavioralAction::ViewedImports,
        BehavioralAction::ViewedMacros,
        BehavioralAction::ViewedEntropy,
        BehavioralAction::ViewedStructure,
        BehavioralAction::MarkedIoc,
        BehavioralAction::RanChat,
        BehavioralAction::AppliedTransform,
        BehavioralAction::ExtractedChild,
    ];

    /// Name of the parameter carrying the second fact argument, if any.
    pub fn required_param(self) -> Option<&'static str> {
        match self {
            BehavioralAction::MarkedIoc => Some("value"),
            BehavioralAction::AppliedTransform => Some("kind"),
            BehavioralAction::ExtractedChild => Some("child"),
            _ => None,
        }
    }
}

impl fmt::Display for BehavioralAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for BehavioralAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BehavioralAction::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: ChatRole,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoteKind {
    Explanation,
    Summary,
    Reply,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub artifact: ArtifactId,
    pub kind: NoteKind,
    pub text: String,
}

/// Which LLM interaction produced a [`SessionEvent::ChatExchanged`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExchangeKind {
    Chat,
    ExplainArtifact,
    SuggestRename,
    SummarizeFindings,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum SessionEvent {
    ArtifactAdded {
        artifact: Artifact,
    },
    FactAdded {
        fact: Fact,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        finding: Option<Finding>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    ActionRecorded {
        action: String,
        target: ArtifactId,
        params: BTreeMap<String, String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fact: Option<Fact>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rename: Option<String>,
    },
    /// Snapshot of the rendered suggestions; informational only.
    SuggestionEmitted {
        suggestions: Vec<String>,
    },
    ChatExchanged {
        exchange: ExchangeKind,
        focus: ArtifactId,
        question: String,
        prompt: String,
        template_version: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reply: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<Note>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fact: Option<Fact>,
    },
}

impl SessionEvent {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SessionEvent::ArtifactAdded { .. } => "ArtifactAdded",
            SessionEvent::FactAdded { .. } => "FactAdded",
            SessionEvent::ActionRecorded { .. } => "ActionRecorded",
            SessionEvent::SuggestionEmitted { .. } => "SuggestionEmitted",
            SessionEvent::ChatExchanged { .. } => "ChatExchanged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEvent {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub event: SessionEvent,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_names_round_trip() {
        for a in BehavioralAction::ALL {
            assert_eq!(a.to_string().parse::<BehavioralAction>().unwrap(), a);
        }
        assert_eq!("viewedhex".parse::<BehavioralAction>().unwrap(), BehavioralAction::ViewedHex);
        assert!("Deleted".parse::<BehavioralAction>().is_err());
    }

    #[test]
    fn event_encoding_is_tagged() {
        let e = LogEvent {
            seq: 0,
            timestamp: DateTime::from_timestamp(0, 0).unwrap(),
            event: SessionEvent::SuggestionEmitted { suggestions: vec!["x".into()] },
        };
        let v = serde_json::to_value(&e).unwrap();
        assert_eq!(v["kind"], "SuggestionEmitted");
        assert_eq!(v["payload"]["suggestions"][0], "x");
        assert_eq!(serde_json::from_value::<LogEvent>(v).unwrap(), e);
    }
}
