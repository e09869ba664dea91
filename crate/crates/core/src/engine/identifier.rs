use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::artifact::{ArtifactId, ContentKind};
use crate::config::AnalysisSettings;
use crate::inference::Term;

/// Argument of a fact emitted by an identifier, before the artifact and its
/// children have ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    /// The artifact being analyzed.
    This,
    /// The `n`th child in [`AnalysisResult::children`].
    Child(usize),
    Str(String),
    Int(i64),
}

impl From<&str> for Arg {
    fn from(s: &str) -> Self {
        Arg::Str(s.to_string())
    }
}

impl From<String> for Arg {
    fn from(s: String) -> Self {
        Arg::Str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactSpec {
    pub predicate: String,
    pub args: Vec<Arg>,
}

impl FactSpec {
    pub fn new(predicate: &str, args: Vec<Arg>) -> Self {
        Self {
            predicate: predicate.to_string(),
            args,
        }
    }

    /// `Predicate(this)`.
    pub fn unary(predicate: &str) -> Self {
        Self::new(predicate, vec![Arg::This])
    }

    /// Ground arguments; `None` when a referenced child was not materialized.
    pub fn resolve(&self, this: ArtifactId, children: &[Option<ArtifactId>]) -> Option<Vec<Term>> {
        self.args
            .iter()
            .map(|a| match a {
                Arg::This => Some(Term::Artifact(this)),
                Arg::Child(i) => children.get(*i).copied().flatten().map(Term::Artifact),
                Arg::Str(s) => Some(Term::Str(s.clone())),
                Arg::Int(i) => Some(Term::Int(*i)),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChildSpec {
    pub name: String,
    pub data: Vec<u8>,
    pub locator: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewKind {
    Hex,
    Text,
    Structured,
    Table,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewerHint {
    pub view: ViewKind,
    pub region: Option<(u64, u64)>,
    pub label: String,
}

impl ViewerHint {
    pub fn new(view: ViewKind, label: &str) -> Self {
        Self {
            view,
            region: None,
            label: label.to_string(),
        }
    }

    pub fn region(view: ViewKind, offset: u64, length: u64, label: &str) -> Self {
        Self {
            view,
            region: Some((offset, length)),
            label: label.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransformKind {
    DecodeBase64,
    DecodeHex,
    DecodeUrl,
    XorBruteForce,
    JsCharCodeDecode,
    TryArchivePassword,
}

impl TransformKind {
    pub const ALL: [TransformKind; 6] = [
        TransformKind::DecodeBase64,
        TransformKind::DecodeHex,
        TransformKind::DecodeUrl,
        TransformKind::XorBruteForce,
        TransformKind::JsCharCodeDecode,
        TransformKind::TryArchivePassword,
    ];
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for TransformKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown transform kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformRequest {
    pub kind: TransformKind,
    pub target: ArtifactId,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl TransformRequest {
    pub fn new(kind: TransformKind, target: ArtifactId) -> Self {
        Self {
            kind,
            target,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: &str) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

/// A transform an identifier proposes for the artifact it analyzed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delegation {
    pub kind: TransformKind,
    pub params: BTreeMap<String, String>,
}

/// Which bytes the generic strings/indicator/entropy pass looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanScope {
    #[default]
    Full,
    Range(usize, usize),
    Skip,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisResult {
    pub facts: Vec<FactSpec>,
    pub children: Vec<ChildSpec>,
    pub viewer_hints: Vec<ViewerHint>,
    pub delegations: Vec<Delegation>,
    pub scan: ScanScope,
}

impl AnalysisResult {
    pub fn fact(&mut self, predicate: &str, args: Vec<Arg>) {
        self.facts.push(FactSpec::new(predicate, args));
    }

    pub fn flag(&mut self, predicate: &str) {
        self.facts.push(FactSpec::unary(predicate));
    }

    /// Adds a child and returns the argument referring to it.
    pub fn child(&mut self, name: String, data: Vec<u8>, locator: String) -> Arg {
        self.children.push(ChildSpec { name, data, locator });
        Arg::Child(self.children.len() - 1)
    }

    pub fn delegate(&mut self, kind: TransformKind) {
        self.delegations.push(Delegation {
            kind,
            params: BTreeMap::new(),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdentifyError {
    #[error("parse failed: {0}")]
    Parse(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// What an identifier may know beyond the bytes it parses.
pub struct IdentifyContext<'a> {
    pub name: &'a str,
    /// Password candidates gathered elsewhere in the session, oldest first.
    pub passwords: &'a [String],
    pub settings: &'a AnalysisSettings,
}

/// A parser for one content kind. Implementations are pure: the same bytes
/// and context always give the same result.
pub trait DataIdentifier: Send + Sync {
    fn name(&self) -> &'static str;

    fn identify(&self, data: &[u8], cx: &IdentifyContext<'_>) -> Result<AnalysisResult, IdentifyError>;

    /// Parsed summary for the structured view.
    fn structured(&self, _data: &[u8]) -> Result<serde_json::Value, IdentifyError> {
        Ok(serde_json::Value::Null)
    }
}

/// Fallback for content no specialized identifier claims.
pub struct GenericIdentifier;

impl DataIdentifier for GenericIdentifier {
    fn name(&self) -> &'static str {
        "generic"
    }

    fn identify(&self, _data: &[u8], _cx: &IdentifyContext<'_>) -> Result<AnalysisResult, IdentifyError> {
        Ok(AnalysisResult::default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("an identifier for {0} is already registered")]
    Duplicate(ContentKind),
}

#[derive(Clone)]
pub struct Registry {
    identifiers: BTreeMap<ContentKind, Arc<dyn DataIdentifier>>,
    generic: Arc<dyn DataIdentifier>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::empty()
    }
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.identifiers.iter().map(|(k, v)| (k, v.name())))
            .finish()
    }
}

impl Registry {
    /// Only the generic identifier.
    pub fn empty() -> Self {
        Self {
            identifiers: BTreeMap::new(),
            generic: Arc::new(GenericIdentifier),
        }
    }

    pub fn register(&mut self, kind: ContentKind, identifier: Arc<dyn DataIdentifier>) -> Result<(), RegistryError> {
        if self.identifiers.contains_key(&kind) {
            return Err(RegistryError::Duplicate(kind));
        }
        self.identifiers.insert(kind, identifier);
        Ok(())
    }

    pub fn resolve(&self, kind: ContentKind) -> &dyn DataIdentifier {
        self.identifiers.get(&kind).unwrap_or(&self.generic).as_ref()
    }

    pub fn is_registered(&self, kind: ContentKind) -> bool {
        self.identifiers.contains_key(&kind)
    }
}
