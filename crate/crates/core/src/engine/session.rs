//! The session: artifact tree, fact store, findings and the event log.
//!
//! Every mutation is expressed as a [`SessionEvent`] and goes through
//! [`Session::apply`], the same path replay uses, so a session rebuilt from
//! its log matches the live one.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::artifact::{Artifact, ArtifactId, ContentKind, ContentType, Provenance};
use super::detect::detect_type_with;
use super::error::EngineError;
use super::identifier::{
    AnalysisResult, IdentifyContext, Registry, ScanScope, TransformRequest, ViewerHint,
};
use super::log::{BehavioralAction, ChatRole, ChatTurn, LogEvent, Note, SessionEvent};
use super::transform::execute_transform;
use super::views::{hex_rows, EntropyView, HexView, StringsView, StructuredView, DEFAULT_HEX_WINDOW};
use crate::config::AnalysisSettings;
use crate::formats;
use crate::inference::{
    derive_fixpoint, evaluate_suggestions, explain_derivation, DerivationTree, Fact, FactStore,
    Fixpoint, GroundAtom, InferenceError, Origin, RuleSet, Suggestion, Term,
};
use crate::text::{self, Finding, IocKind};

/// What one identifier run produced, for callers that want more than facts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactReport {
    pub artifact: ArtifactId,
    pub identifier: String,
    pub viewer_hints: Vec<ViewerHint>,
    pub delegations: Vec<TransformRequest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOutcome {
    pub artifact: ArtifactId,
    pub new_artifacts: Vec<ArtifactId>,
    pub new_facts: usize,
    pub reports: Vec<ArtifactReport>,
}

#[derive(Debug, Clone, PartialEq)]
struct Inference {
    fixpoint: Fixpoint,
    suggestions: Vec<Suggestion>,
}

type ChildKey = (ArtifactId, String, String);

pub struct Session {
    id: String,
    settings: AnalysisSettings,
    registry: Arc<Registry>,
    rules: RuleSet,
    artifacts: BTreeMap<ArtifactId, Artifact>,
    children: BTreeMap<ArtifactId, Vec<ArtifactId>>,
    child_index: HashMap<ChildKey, ArtifactId>,
    next_id: u64,
    total_bytes: u64,
    facts: FactStore,
    findings: Vec<Finding>,
    finding_index: HashSet<(ArtifactId, IocKind, String)>,
    notes: Vec<Note>,
    chat: Vec<ChatTurn>,
    log: Vec<LogEvent>,
    inference: Result<Inference, InferenceError>,
    chat_pending: bool,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("artifacts", &self.artifacts.len())
            .field("facts", &self.facts.len())
            .field("events", &self.log.len())
            .finish()
    }
}

fn digest(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

fn child_key(artifact: &Artifact) -> Option<ChildKey> {
    let locator = match &artifact.provenance {
        Provenance::RootUpload => return None,
        Provenance::ExtractedChild { locator, .. } => locator.clone(),
        Provenance::UserSelection { offset, length, .. } => format!("selection:{offset}:{length}"),
    };
    Some((artifact.parent()?, locator, digest(&artifact.data)))
}

impl Session {
    pub fn new(id: impl Into<String>, rules: RuleSet, registry: Arc<Registry>, settings: AnalysisSettings) -> Self {
        let mut s = Self {
            id: id.into(),
            settings,
            registry,
            rules,
            artifacts: BTreeMap::new(),
            children: BTreeMap::new(),
            child_index: HashMap::new(),
            next_id: 1,
            total_bytes: 0,
            facts: FactStore::new(),
            findings: Vec::new(),
            finding_index: HashSet::new(),
            notes: Vec::new(),
            chat: Vec::new(),
            log: Vec::new(),
            inference: Ok(Inference {
                fixpoint: Fixpoint::default(),
                suggestions: Vec::new(),
            }),
            chat_pending: false,
        };
        s.refresh();
        s
    }

    /// Default registry, bundled rule pack and default settings.
    pub fn with_defaults(id: impl Into<String>) -> Self {
        Self::new(
            id,
            crate::inference::default_rules(),
            Arc::new(formats::default_registry()),
            AnalysisSettings::default(),
        )
    }

    /// Adds the root artifact and analyzes it recursively.
    pub fn open(&mut self, name: &str, data: Vec<u8>) -> Result<AnalyzeOutcome, EngineError> {
        let root = self.add_root(name, data)?;
        self.analyze(root)
    }

    // ---- accessors -------------------------------------------------------

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn settings(&self) -> &AnalysisSettings {
        &self.settings
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn root(&self) -> Option<ArtifactId> {
        self.artifacts.values().find(|a| a.parent().is_none()).map(|a| a.id)
    }

    pub fn artifact(&self, id: ArtifactId) -> Result<&Artifact, EngineError> {
        self.artifacts.get(&id).ok_or(EngineError::NotFound(id))
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.artifacts.values()
    }

    pub fn artifact_count(&self) -> usize {
        self.artifacts.len()
    }

    pub fn children(&self, id: ArtifactId) -> &[ArtifactId] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Parent chain from the direct parent up to the root.
    pub fn ancestors(&self, id: ArtifactId) -> Vec<ArtifactId> {
        let mut out = Vec::new();
        let mut cur = self.artifacts.get(&id).and_then(Artifact::parent);
        while let Some(p) = cur {
            if out.contains(&p) {
                break;
            }
            out.push(p);
            cur = self.artifacts.get(&p).and_then(Artifact::parent);
        }
        out
    }

    pub fn depth(&self, id: ArtifactId) -> usize {
        self.ancestors(id).len()
    }

    pub fn display_name(&self, id: ArtifactId) -> Option<String> {
        self.artifacts.get(&id).map(|a| a.name.clone())
    }

    pub fn facts(&self) -> &FactStore {
        &self.facts
    }

    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn chat_history(&self) -> &[ChatTurn] {
        &self.chat
    }

    pub fn log(&self) -> &[LogEvent] {
        &self.log
    }

    pub fn fixpoint(&self) -> Result<&Fixpoint, InferenceError> {
        self.inference.as_ref().map(|i| &i.fixpoint).map_err(Clone::clone)
    }

    pub fn suggestions(&self) -> Result<&[Suggestion], InferenceError> {
        self.inference
            .as_ref()
            .map(|i| i.suggestions.as_slice())
            .map_err(Clone::clone)
    }

    /// Base facts followed by derived ones.
    pub fn all_facts(&self) -> Vec<Fact> {
        let mut v = self.facts.facts();
        if let Ok(inf) = &self.inference {
            v.extend(inf.fixpoint.derived_facts());
        }
        v
    }

    pub fn explain(&self, atom: &GroundAtom) -> Result<DerivationTree, EngineError> {
        let fixpoint = self.fixpoint()?;
        Ok(explain_derivation(&self.facts, fixpoint, atom)?)
    }

    /// Password candidates asserted anywhere in the session, oldest first.
    pub fn password_candidates(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (atom, _) in self.facts.atoms() {
            if atom.predicate == "PasswordCandidate" {
                if let Some(Term::Str(p)) = atom.args.get(1) {
                    if !out.contains(p) {
                        out.push(p.clone());
                    }
                }
            }
        }
        out
    }

    pub fn is_chat_pending(&self) -> bool {
        self.chat_pending
    }

    pub(crate) fn set_chat_pending(&mut self, pending: bool) {
        self.chat_pending = pending;
    }

    /// Checks the single-root tree property over parent links.
    pub fn check_tree(&self) -> Result<(), String> {
        let roots = self.artifacts.values().filter(|a| a.parent().is_none()).count();
        if !self.artifacts.is_empty() && roots != 1 {
            return Err(format!("{roots} roots"));
        }
        for a in self.artifacts.values() {
            if let Some(p) = a.parent() {
                if !self.artifacts.contains_key(&p) {
                    return Err(format!("{} has missing parent {p}", a.id));
                }
                if p >= a.id {
                    return Err(format!("{} has parent {p} created after it", a.id));
                }
            }
        }
        Ok(())
    }

    // ---- event application ------------------------------------------------

    pub(crate) fn commit(&mut self, event: SessionEvent) -> Result<(), EngineError> {
        let seq = self.log.len() as u64;
        self.apply(seq, &event)?;
        self.log.push(LogEvent {
            seq,
            timestamp: Utc::now(),
            event,
        });
        Ok(())
    }

    /// Applies a logged event and appends it, as replay does.
    pub(crate) fn replay_event(&mut self, event: LogEvent) -> Result<(), EngineError> {
        if event.seq != self.log.len() as u64 {
            return Err(EngineError::Replay {
                seq: event.seq,
                reason: format!("expected sequence number {}", self.log.len()),
            });
        }
        self.apply(event.seq, &event.event)?;
        self.log.push(event);
        Ok(())
    }

    fn apply(&mut self, seq: u64, event: &SessionEvent) -> Result<(), EngineError> {
        let fail = |reason: String| EngineError::Replay { seq, reason };
        match event {
            SessionEvent::ArtifactAdded { artifact } => {
                if self.artifacts.contains_key(&artifact.id) {
                    return Err(fail(format!("artifact {} already exists", artifact.id)));
                }
                if artifact.id.get() < self.next_id {
                    return Err(fail(format!("artifact id {} reused", artifact.id)));
                }
                match &artifact.provenance {
                    Provenance::RootUpload => {
                        if !self.artifacts.is_empty() {
                            return Err(fail("second root artifact".into()));
                        }
                    }
                    Provenance::ExtractedChild { parent, locator } => {
                        if !self.artifacts.contains_key(parent) {
                            return Err(fail(format!("parent {parent} does not exist")));
                        }
                        if locator.is_empty() {
                            return Err(fail("empty locator".into()));
                        }
                    }
                    Provenance::UserSelection { parent, offset, length } => {
                        let p = self
                            .artifacts
                            .get(parent)
                            .ok_or_else(|| fail(format!("parent {parent} does not exist")))?;
                        let end = offset.checked_add(*length);
                        if end.is_none_or(|e| e > p.data.len() as u64) || *length != artifact.data.len() as u64 {
                            return Err(fail(format!("selection out of bounds of {parent}")));
                        }
                    }
                }
                self.next_id = artifact.id.get() + 1;
                self.total_bytes += artifact.data.len() as u64;
                if let Some(p) = artifact.parent() {
                    self.children.entry(p).or_default().push(artifact.id);
                }
                if let Some(key) = child_key(artifact) {
                    self.child_index.entry(key).or_insert(artifact.id);
                }
                self.artifacts.insert(artifact.id, artifact.clone());
            }
            SessionEvent::FactAdded { fact, finding, detail } => {
                self.insert_fact(fact).map_err(&fail)?;
                self.fact_effects(fact, detail.as_deref());
                if let Some(f) = finding {
                    if !self.artifacts.contains_key(&f.source) {
                        return Err(fail(format!("finding source {} does not exist", f.source)));
                    }
                    if self.finding_index.insert((f.source, f.kind, f.value.clone())) {
                        self.findings.push(f.clone());
                    }
                }
            }
            SessionEvent::ActionRecorded { target, fact, rename, .. } => {
                if !self.artifacts.contains_key(target) {
                    return Err(fail(format!("target {target} does not exist")));
                }
                if let Some(fact) = fact {
                    self.insert_fact(fact).map_err(&fail)?;
                }
                if let Some(name) = rename {
                    let a = self.artifacts.get_mut(target).expect("checked above");
                    if !a.metadata.contains_key("original_name") {
                        a.metadata.insert("original_name".into(), a.name.clone());
                    }
                    a.name = name.clone();
                }
            }
            SessionEvent::SuggestionEmitted { .. } => {}
            SessionEvent::ChatExchanged {
                exchange,
                question,
                reply,
                note,
                fact,
                focus,
                ..
            } => {
                if !self.artifacts.contains_key(focus) {
                    return Err(fail(format!("focus {focus} does not exist")));
                }
                if let (super::log::ExchangeKind::Chat, Some(reply)) = (exchange, reply) {
                    self.chat.push(ChatTurn {
                        role: ChatRole::User,
                        text: question.clone(),
                    });
                    self.chat.push(ChatTurn {
                        role: ChatRole::Assistant,
                        text: reply.clone(),
                    });
                }
                if let Some(n) = note {
                    self.notes.push(n.clone());
                }
                if let Some(fact) = fact {
                    self.insert_fact(fact).map_err(&fail)?;
                }
            }
        }
        Ok(())
    }

    fn insert_fact(&mut self, fact: &Fact) -> Result<(), String> {
        if fact.origin == Origin::Derived {
            return Err(format!("derived fact {fact} cannot be stored"));
        }
        for id in fact.args.iter().filter_map(Term::as_artifact) {
            if !self.artifacts.contains_key(&id) {
                return Err(format!("fact {fact} references missing artifact {id}"));
            }
        }
        self.facts.insert(fact.clone()).map(|_| ()).map_err(|e| e.to_string())
    }

    fn fact_effects(&mut self, fact: &Fact, detail: Option<&str>) {
        let Some(a) = fact.subject().and_then(|id| self.artifacts.get_mut(&id)) else {
            return;
        };
        match fact.predicate.as_str() {
            "Analyzed" => a.analyzed = true,
            "ParseFailed" => {
                if a.content_type.kind != ContentKind::GenericBinary {
                    a.metadata
                        .insert("detected_as".into(), a.content_type.kind.to_string());
                }
                if let Some(d) = detail {
                    a.metadata.insert("parse_error".into(), d.to_string());
                }
                a.content_type = ContentType::generic();
            }
            _ => {}
        }
    }

    /// Commits `fact` unless already present; returns whether it was new.
    fn add_fact(&mut self, fact: Fact, finding: Option<Finding>, detail: Option<String>) -> Result<bool, EngineError> {
        if self.facts.contains(&fact.atom()) {
            return Ok(false);
        }
        if let Err(e) = self.facts.check(&fact) {
            log::warn!("dropping fact {fact}: {e}");
            return Ok(false);
        }
        self.commit(SessionEvent::FactAdded { fact, finding, detail })?;
        Ok(true)
    }

    // ---- inference ----------------------------------------------------------

    pub(crate) fn refresh(&mut self) {
        let derivations: Vec<_> = self.rules.derivations().collect();
        let suggestion_rules: Vec<_> = self.rules.suggestions().collect();
        let names = |id: ArtifactId| self.artifacts.get(&id).map(|a| a.name.clone());
        self.inference = derive_fixpoint(&self.facts, &derivations, self.settings.max_derived_facts).and_then(|fixpoint| {
            let suggestions = evaluate_suggestions(&self.facts, &fixpoint, &suggestion_rules, &names)?;
            Ok(Inference { fixpoint, suggestions })
        });
    }

    fn emit_suggestions(&mut self) -> Result<(), EngineError> {
        let suggestions = match &self.inference {
            Ok(inf) => inf.suggestions.iter().map(|s| s.text.clone()).collect(),
            Err(_) => Vec::new(),
        };
        self.commit(SessionEvent::SuggestionEmitted { suggestions })
    }

    /// Adds rules from another pack and re-evaluates.
    pub fn load_rules(&mut self, source: &str) -> Result<(), EngineError> {
        self.rules.extend_from_source(source)?;
        self.refresh();
        Ok(())
    }

    // ---- artifacts ----------------------------------------------------------

    pub fn add_root(&mut self, name: &str, data: Vec<u8>) -> Result<ArtifactId, EngineError> {
        if !self.artifacts.is_empty() {
            return Err(EngineError::RootExists);
        }
        let name = if name.trim().is_empty() { "upload" } else { name };
        self.new_artifact(name.to_string(), data, Provenance::RootUpload)
    }

    fn new_artifact(&mut self, name: String, data: Vec<u8>, provenance: Provenance) -> Result<ArtifactId, EngineError> {
        if self.artifacts.len() >= self.settings.max_artifacts {
            return Err(EngineError::Limit(format!("{} artifacts", self.settings.max_artifacts)));
        }
        if self.total_bytes + data.len() as u64 > self.settings.max_session_bytes {
            return Err(EngineError::Limit(format!("{} bytes per session", self.settings.max_session_bytes)));
        }
        let id = ArtifactId::new(self.next_id);
        let artifact = Artifact {
            id,
            name,
            content_type: detect_type_with(&data, self.settings.text_ratio),
            data,
            provenance,
            metadata: BTreeMap::new(),
            analyzed: false,
        };
        self.commit(SessionEvent::ArtifactAdded { artifact })?;
        Ok(id)
    }

    /// Existing child with the same parent, locator and bytes, if any.
    fn find_child(&self, parent: ArtifactId, locator: &str, data: &[u8]) -> Option<ArtifactId> {
        self.child_index
            .get(&(parent, locator.to_string(), digest(data)))
            .copied()
    }

    // ---- analysis -------------------------------------------------------------

    /// Runs the identifier for `id` and, recursively, for every new child.
    pub fn analyze(&mut self, id: ArtifactId) -> Result<AnalyzeOutcome, EngineError> {
        self.artifact(id)?;
        let mut outcome = AnalyzeOutcome {
            artifact: id,
            new_artifacts: Vec::new(),
            new_facts: 0,
            reports: Vec::new(),
        };
        self.analyze_queue(id, &mut outcome)?;
        self.refresh();
        self.emit_suggestions()?;
        Ok(outcome)
    }

    fn analyze_queue(&mut self, id: ArtifactId, outcome: &mut AnalyzeOutcome) -> Result<(), EngineError> {
        let mut queue = VecDeque::from([id]);
        while let Some(next) = queue.pop_front() {
            for child in self.analyze_one(next, outcome)? {
                if !self.artifacts[&child].analyzed {
                    queue.push_back(child);
                }
            }
        }
        Ok(())
    }

    fn analyze_one(&mut self, id: ArtifactId, outcome: &mut AnalyzeOutcome) -> Result<Vec<ArtifactId>, EngineError> {
        let passwords = self.password_candidates();
        let (identifier, result, failure, common) = {
            let a = &self.artifacts[&id];
            let ident = self.registry.resolve(a.content_type.kind);
            let cx = IdentifyContext {
                name: &a.name,
                passwords: &passwords,
                settings: &self.settings,
            };
            let (result, failure) = match ident.identify(&a.data, &cx) {
                Ok(r) => (r, None),
                Err(e) => (AnalysisResult::default(), Some(e.to_string())),
            };
            let scope = if failure.is_some() { ScanScope::Full } else { result.scan };
            let common = common_pass(&a.data, scope, &self.settings);
            (ident.name().to_string(), result, failure, common)
        };

        let mut facts: Vec<(Fact, Option<Finding>, Option<String>)> = Vec::new();
        let this = Term::Artifact(id);
        if let Some(reason) = &failure {
            facts.push((Fact::analysis("ParseFailed", vec![this.clone()]), None, Some(reason.clone())));
        }
        facts.push((Fact::analysis("Analyzed", vec![this.clone()]), None, None));
        let kind = if failure.is_some() {
            ContentKind::GenericBinary
        } else {
            self.artifacts[&id].content_type.kind
        };
        facts.push((Fact::analysis(kind.type_predicate(), vec![this.clone()]), None, None));

        // children
        let depth = self.depth(id) + 1;
        let mut child_ids: Vec<Option<ArtifactId>> = Vec::new();
        let mut fresh = Vec::new();
        for spec in &result.children {
            if spec.data.is_empty() {
                child_ids.push(None);
                continue;
            }
            if let Some(existing) = self.find_child(id, &spec.locator, &spec.data) {
                child_ids.push(Some(existing));
                continue;
            }
            if depth > self.settings.max_depth {
                facts.push((Fact::analysis("DepthLimitReached", vec![this.clone()]), None, None));
                child_ids.push(None);
                continue;
            }
            let provenance = Provenance::ExtractedChild {
                parent: id,
                locator: spec.locator.clone(),
            };
            match self.new_artifact(spec.name.clone(), spec.data.clone(), provenance) {
                Ok(c) => {
                    child_ids.push(Some(c));
                    fresh.push(c);
                }
                Err(EngineError::Limit(_)) => {
                    facts.push((Fact::analysis("ArtifactLimitReached", vec![this.clone()]), None, None));
                    child_ids.push(None);
                }
                Err(e) => return Err(e),
            }
        }

        for spec in &result.facts {
            match spec.resolve(id, &child_ids) {
                Some(args) => facts.push((Fact::analysis(spec.predicate.clone(), args), None, None)),
                None => log::debug!("skipping {} on {id}: child not materialized", spec.predicate),
            }
        }
        for c in child_ids.iter().flatten() {
            facts.push((Fact::analysis("ContainsArtifact", vec![this.clone(), Term::Artifact(*c)]), None, None));
        }
        if common.has_text {
            facts.push((Fact::analysis("ContainsText", vec![this.clone()]), None, None));
        }
        for m in common.iocs {
            let fact = Fact::analysis(m.kind.fact_predicate(), vec![this.clone(), Term::Str(m.value.clone())]);
            facts.push((fact, Some(Finding::new(id, m)), None));
        }
        for off in common.high_entropy {
            facts.push((Fact::analysis("HighEntropyRegion", vec![this.clone(), Term::Int(off as i64)]), None, None));
        }
        let has_icon = result.facts.iter().any(|f| f.predicate == "HasIconResource");
        for p in formats::detect_masquerade(&self.artifacts[&id].name, kind, has_icon) {
            facts.push((Fact::analysis(p, vec![this.clone()]), None, None));
        }

        for (fact, finding, detail) in facts {
            if self.add_fact(fact, finding, detail)? {
                outcome.new_facts += 1;
            }
        }

        outcome.new_artifacts.extend(&fresh);
        outcome.reports.push(ArtifactReport {
            artifact: id,
            identifier,
            viewer_hints: result.viewer_hints,
            delegations: result
                .delegations
                .into_iter()
                .map(|d| TransformRequest {
                    kind: d.kind,
                    target: id,
                    params: d.params,
                })
                .collect(),
            parse_error: failure,
        });
        Ok(child_ids.into_iter().flatten().collect())
    }

    /// Carves `[offset, offset + length)` of `parent` into a new artifact and
    /// analyzes it.
    pub fn reanalyze_selection(
        &mut self,
        parent: ArtifactId,
        offset: u64,
        length: u64,
        name: &str,
    ) -> Result<(ArtifactId, AnalyzeOutcome), EngineError> {
        let size = self.artifact(parent)?.data.len() as u64;
        if length == 0 {
            return Err(EngineError::InvalidArgument("selection length must be positive".into()));
        }
        if offset.checked_add(length).is_none_or(|end| end > size) {
            return Err(EngineError::Range {
                id: parent,
                offset,
                length,
                size,
            });
        }
        let data = self.artifacts[&parent].data[offset as usize..(offset + length) as usize].to_vec();
        let name = if name.trim().is_empty() {
            format!("selection@0x{offset:x}")
        } else {
            name.to_string()
        };
        let locator = format!("selection:{offset}:{length}");
        let child = match self.find_child(parent, &locator, &data) {
            Some(c) => c,
            None => self.new_artifact(name, data, Provenance::UserSelection { parent, offset, length })?,
        };
        let fact = Fact::behavioral("ExtractedChild", vec![Term::Artifact(parent), Term::Artifact(child)]);
        self.commit(SessionEvent::ActionRecorded {
            action: BehavioralAction::ExtractedChild.to_string(),
            target: parent,
            params: BTreeMap::from([("child".to_string(), child.to_string())]),
            fact: Some(fact),
            rename: None,
        })?;
        let mut outcome = AnalyzeOutcome {
            artifact: child,
            new_artifacts: vec![child],
            new_facts: 0,
            reports: Vec::new(),
        };
        if !self.artifacts[&child].analyzed {
            self.analyze_queue(child, &mut outcome)?;
        }
        self.refresh();
        self.emit_suggestions()?;
        Ok((child, outcome))
    }

    /// Records an analyst action as a behavioral fact.
    pub fn record_action(
        &mut self,
        action: BehavioralAction,
        target: ArtifactId,
        params: BTreeMap<String, String>,
    ) -> Result<Fact, EngineError> {
        self.artifact(target)?;
        let mut args = vec![Term::Artifact(target)];
        if let Some(key) = action.required_param() {
            let value = params
                .get(key)
                .ok_or_else(|| EngineError::InvalidArgument(format!("{action} requires parameter {key:?}")))?;
            if action == BehavioralAction::ExtractedChild {
                let child: ArtifactId = value
                    .parse()
                    .map_err(|e: super::artifact::ParseArtifactIdError| EngineError::InvalidArgument(e.to_string()))?;
                self.artifact(child)?;
                args.push(Term::Artifact(child));
            } else {
                args.push(Term::Str(value.clone()));
            }
        }
        let fact = Fact::behavioral(action.to_string(), args);
        self.facts
            .check(&fact)
            .map_err(|e| EngineError::InvalidArgument(e.to_string()))?;
        self.commit(SessionEvent::ActionRecorded {
            action: action.to_string(),
            target,
            params,
            fact: Some(fact.clone()),
            rename: None,
        })?;
        self.refresh();
        Ok(fact)
    }

    /// Renames an artifact, keeping the first name in metadata.
    pub fn apply_rename(&mut self, target: ArtifactId, name: &str) -> Result<(), EngineError> {
        self.artifact(target)?;
        let name = name.trim();
        if name.is_empty() || name.contains(['\n', '\r']) {
            return Err(EngineError::InvalidArgument("name must be a non-empty single line".into()));
        }
        self.commit(SessionEvent::ActionRecorded {
            action: "Rename".into(),
            target,
            params: BTreeMap::from([("name".to_string(), name.to_string())]),
            fact: None,
            rename: Some(name.to_string()),
        })?;
        self.refresh();
        Ok(())
    }

    /// Runs a transform; the output becomes an analyzed child of the target.
    pub fn run_transform(&mut self, request: &TransformRequest) -> Result<(ArtifactId, AnalyzeOutcome), EngineError> {
        let target = request.target;
        let output = {
            let a = self.artifact(target)?;
            execute_transform(request.kind, &a.name, &a.data, &request.params, &self.settings).map_err(|source| {
                EngineError::Transform {
                    kind: request.kind,
                    source,
                }
            })?
        };
        let locator = format!("transform:{}", request.kind);
        let child = match self.find_child(target, &locator, &output.data) {
            Some(c) => c,
            None => self.new_artifact(
                output.name.clone(),
                output.data.clone(),
                Provenance::ExtractedChild { parent: target, locator },
            )?,
        };
        for spec in &output.facts {
            if let Some(args) = spec.resolve(target, &[]) {
                self.add_fact(Fact::analysis(spec.predicate.clone(), args), None, None)?;
            }
        }
        let fact = Fact::behavioral(
            BehavioralAction::AppliedTransform.to_string(),
            vec![Term::Artifact(target), Term::Str(request.kind.to_string())],
        );
        let mut params = request.params.clone();
        params.insert("kind".into(), request.kind.to_string());
        params.insert("child".into(), child.to_string());
        self.commit(SessionEvent::ActionRecorded {
            action: BehavioralAction::AppliedTransform.to_string(),
            target,
            params,
            fact: Some(fact),
            rename: None,
        })?;
        let mut outcome = AnalyzeOutcome {
            artifact: child,
            new_artifacts: vec![child],
            new_facts: 0,
            reports: Vec::new(),
        };
        if !self.artifacts[&child].analyzed {
            self.analyze_queue(child, &mut outcome)?;
        }
        self.refresh();
        self.emit_suggestions()?;
        Ok((child, outcome))
    }
}

impl Session {
    fn record_view(&mut self, action: BehavioralAction, target: ArtifactId) -> Result<(), EngineError> {
        self.record_action(action, target, BTreeMap::new()).map(|_| ())
    }

    /// Hex rows of `[offset, offset + length)`; the default length is
    /// [`DEFAULT_HEX_WINDOW`] clipped to the artifact.
    pub fn view_hex(&mut self, id: ArtifactId, offset: u64, length: Option<u64>) -> Result<HexView, EngineError> {
        let size = self.artifact(id)?.data.len() as u64;
        let length = length.unwrap_or_else(|| DEFAULT_HEX_WINDOW.min(size.saturating_sub(offset)));
        if offset > size || offset.checked_add(length).is_none_or(|end| end > size) {
            return Err(EngineError::Range { id, offset, length, size });
        }
        let data = &self.artifacts[&id].data[offset as usize..(offset + length) as usize];
        let view = HexView {
            artifact: id,
            offset,
            length,
            total: size,
            rows: hex_rows(data, offset),
        };
        self.record_view(BehavioralAction::ViewedHex, id)?;
        Ok(view)
    }

    pub fn view_strings(&mut self, id: ArtifactId, min_length: Option<usize>) -> Result<StringsView, EngineError> {
        let min_length = min_length.unwrap_or(self.settings.min_string_length);
        if min_length == 0 {
            return Err(EngineError::InvalidArgument("min_length must be at least 1".into()));
        }
        let strings = text::extract_strings(&self.artifact(id)?.data, min_length);
        self.record_view(BehavioralAction::ViewedStrings, id)?;
        Ok(StringsView {
            artifact: id,
            min_length,
            strings,
        })
    }

    /// The identifier's parsed summary. For executables this is the import
    /// view and is recorded as such.
    pub fn view_structured(&mut self, id: ArtifactId) -> Result<StructuredView, EngineError> {
        let a = self.artifact(id)?;
        let ident = self.registry.resolve(a.content_type.kind);
        let (summary, note) = match ident.structured(&a.data) {
            Ok(serde_json::Value::Null) => (
                serde_json::json!({}),
                Some(format!("no structured summary for {}", a.content_type.kind)),
            ),
            Ok(v) => (v, None),
            Err(e) => (serde_json::json!({}), Some(e.to_string())),
        };
        let view = StructuredView {
            artifact: id,
            content_type: a.content_type,
            identifier: ident.name().to_string(),
            summary,
            note,
        };
        let action = if a.content_type.kind == ContentKind::Pe {
            BehavioralAction::ViewedImports
        } else {
            BehavioralAction::ViewedStructure
        };
        self.record_view(action, id)?;
        Ok(view)
    }

    pub fn view_entropy(
        &mut self,
        id: ArtifactId,
        window: Option<usize>,
        stride: Option<usize>,
    ) -> Result<EntropyView, EngineError> {
        let window = window.unwrap_or(self.settings.entropy_window);
        let stride = stride.unwrap_or(self.settings.entropy_stride);
        let profile = text::shannon_entropy(&self.artifact(id)?.data, window, stride)
            .map_err(|e| EngineError::InvalidArgument(e.to_string()))?;
        let threshold = self.settings.high_entropy;
        let view = EntropyView {
            artifact: id,
            threshold,
            high_regions: profile.high_regions(threshold),
            profile,
        };
        self.record_view(BehavioralAction::ViewedEntropy, id)?;
        Ok(view)
    }
}

struct CommonPass {
    has_text: bool,
    iocs: Vec<text::IocMatch>,
    high_entropy: Vec<usize>,
}

/// Strings, indicators and entropy over the scoped bytes.
fn common_pass(data: &[u8], scope: ScanScope, settings: &AnalysisSettings) -> CommonPass {
    let (start, end) = match scope {
        ScanScope::Full => (0, data.len()),
        ScanScope::Range(s, e) => (s.min(data.len()), e.min(data.len())),
        ScanScope::Skip => {
            return CommonPass {
                has_text: false,
                iocs: Vec::new(),
                high_entropy: Vec::new(),
            }
        }
    };
    let slice = &data[start..end.max(start)];
    let mut strings = text::extract_strings(slice, settings.min_string_length);
    for s in &mut strings {
        s.offset += start;
    }
    let iocs = text::extract_iocs(&strings);
    let high_entropy = text::shannon_entropy(slice, settings.entropy_window, settings.entropy_stride)
        .map(|p| p.high_regions(settings.high_entropy).into_iter().map(|o| o + start).collect())
        .unwrap_or_default();
    CommonPass {
        has_text: !strings.is_empty(),
        iocs,
        high_entropy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session() -> Session {
        Session::with_defaults("t")
    }

    fn has(s: &Session, pred: &str, id: ArtifactId) -> bool {
        s.facts().contains(&GroundAtom::new(pred, vec![Term::Artifact(id)]))
    }

    #[test]
    fn empty_artifact() {
        let mut s = session();
        s.open("empty.bin", Vec::new()).unwrap();
        let root = s.root().unwrap();
        let preds: Vec<String> = s.facts().iter().map(|f| f.predicate).collect();
        assert_eq!(preds, vec!["Analyzed", "IsUnknown"]);
        assert!(s.children(root).is_empty());
        assert!(s.artifact(root).unwrap().analyzed);
    }

    #[test]
    fn analyze_is_idempotent() {
        let mut s = session();
        s.open("note.txt", b"see http://evil.test/a.js and 10.1.2.3".to_vec()).unwrap();
        let root = s.root().unwrap();
        let (facts, arts, findings) = (s.facts().len(), s.artifact_count(), s.findings().len());
        let again = s.analyze(root).unwrap();
        assert_eq!(again.new_facts, 0);
        assert_eq!((s.facts().len(), s.artifact_count(), s.findings().len()), (facts, arts, findings));
        assert_eq!(findings, 2);
    }

    #[test]
    fn unknown_ids_are_not_found() {
        let mut s = session();
        s.open("x", b"abc".to_vec()).unwrap();
        let missing = ArtifactId::new(99);
        assert_eq!(s.analyze(missing).unwrap_err(), EngineError::NotFound(missing));
        assert!(matches!(
            s.record_action(BehavioralAction::Opened, missing, BTreeMap::new()),
            Err(EngineError::NotFound(_))
        ));
    }

    #[test]
    fn selection_bounds() {
        let mut s = session();
        s.open("blob", b"xxxxMZ\0\0yyyy".to_vec()).unwrap();
        let root = s.root().unwrap();
        let (child, _) = s.reanalyze_selection(root, 4, 4, "mz").unwrap();
        let c = s.artifact(child).unwrap();
        assert_eq!(c.data, b"MZ\0\0");
        assert_eq!(c.content_type.kind, ContentKind::GenericBinary);
        assert_eq!(c.metadata.get("detected_as").map(String::as_str), Some("Pe"));
        assert!(has(&s, "ParseFailed", child));
        assert!(s
            .facts()
            .contains(&GroundAtom::new("ExtractedChild", vec![Term::Artifact(root), Term::Artifact(child)])));
        assert!(matches!(s.reanalyze_selection(root, 10, 8, ""), Err(EngineError::Range { .. })));
        assert!(matches!(s.reanalyze_selection(root, 0, 0, ""), Err(EngineError::InvalidArgument(_))));
        s.check_tree().unwrap();
    }

    #[test]
    fn behavioral_facts_and_negation() {
        let mut s = session();
        s.open("t.txt", b"plain words here".to_vec()).unwrap();
        let root = s.root().unwrap();
        let pending = |s: &Session| s.suggestions().unwrap().iter().any(|x| x.rule_name == "view_strings");
        assert!(pending(&s));
        let f = s.record_action(BehavioralAction::ViewedStrings, root, BTreeMap::new()).unwrap();
        assert_eq!(f.origin, Origin::Behavioral);
        assert!(!pending(&s));
    }

    #[test]
    fn transform_creates_child() {
        let mut s = session();
        s.open("b64.txt", b"TVqQ".to_vec()).unwrap();
        let root = s.root().unwrap();
        let before = s.log().len();
        let (child, _) = s
            .run_transform(&TransformRequest::new(super::super::TransformKind::DecodeBase64, root))
            .unwrap();
        let c = s.artifact(child).unwrap();
        assert_eq!(c.data, [0x4D, 0x5A, 0x90]);
        assert_eq!(c.provenance, Provenance::ExtractedChild { parent: root, locator: "transform:DecodeBase64".into() });
        assert!(s.log().len() > before);
        assert!(s.facts().contains(&GroundAtom::new(
            "AppliedTransform",
            vec![Term::Artifact(root), Term::str("DecodeBase64")]
        )));
    }

    #[test]
    fn failed_transform_changes_nothing() {
        let mut s = session();
        s.open("t.txt", b"not base64!".to_vec()).unwrap();
        let root = s.root().unwrap();
        let before = (s.log().len(), s.artifact_count(), s.facts().len());
        let err = s
            .run_transform(&TransformRequest::new(super::super::TransformKind::DecodeBase64, root))
            .unwrap_err();
        assert_eq!(err.to_string(), "DecodeBase64 failed: alphabet violation at offset 10");
        assert_eq!(before, (s.log().len(), s.artifact_count(), s.facts().len()));
    }

    #[test]
    fn rename_keeps_original() {
        let mut s = session();
        s.open("part-2", b"abcd".to_vec()).unwrap();
        let root = s.root().unwrap();
        s.apply_rename(root, "dropper_stage2").unwrap();
        s.apply_rename(root, "third").unwrap();
        let a = s.artifact(root).unwrap();
        assert_eq!(a.name, "third");
        assert_eq!(a.metadata["original_name"], "part-2");
    }
}
