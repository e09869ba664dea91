//! Candidate context items around a focus artifact, scored for relevance.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::config::{KindWeights, WeightsConfig};
use crate::engine::{ArtifactId, ContentKind, EngineError, Session};
use crate::formats::parse_eml;
use crate::inference::{Fact, Origin, Term};
use crate::text::extract_strings;

pub const MAX_ITEM_CHARS: usize = 512;
pub const TOP_STRINGS: usize = 5;
pub const RECENT_ACTIONS: usize = 5;
const ELLIPSIS: char = '…';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextSource {
    Fact,
    Finding,
    StringSample,
    HeaderSummary,
    UserFocus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextItem {
    pub text: String,
    pub relevance: f64,
    pub source: ContextSource,
    pub artifact: ArtifactId,
}

/// Which kind weight applies to an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemKind {
    Imports,
    Masquerade,
    Derived,
    Finding,
    TypeFact,
    Header,
    Behavioral,
    String,
    Structure,
    Other,
}

impl ItemKind {
    pub fn weight(self, k: &KindWeights) -> f64 {
        match self {
            ItemKind::Imports => k.imports,
            ItemKind::Masquerade => k.masquerade,
            ItemKind::Derived => k.derived,
            ItemKind::Finding => k.finding,
            ItemKind::TypeFact => k.type_fact,
            ItemKind::Header => k.header,
            ItemKind::Behavioral => k.behavioral,
            ItemKind::String => k.string,
            ItemKind::Structure => k.structure,
            ItemKind::Other => k.other,
        }
    }

    pub fn of_fact(fact: &Fact) -> Self {
        let p = fact.predicate.as_str();
        match p {
            "ImportsApi" | "ImportParseTruncated" => ItemKind::Imports,
            "HasDoubleExtension" | "IconMismatch" | "SuspiciousMasquerade" | "DeliveredMasquerade" => ItemKind::Masquerade,
            _ if fact.origin == Origin::Behavioral => ItemKind::Behavioral,
            _ if fact.origin == Origin::Derived => ItemKind::Derived,
            _ if ContentKind::ALL.iter().any(|k| k.type_predicate() == p) => ItemKind::TypeFact,
            "ArchiveEntry" | "HighEntropyRegion" | "SectionOutOfBounds" | "ContainsArtifact" | "HeaderMismatch"
            | "ChunkCrcMismatch" | "TruncatedPacket" => ItemKind::Structure,
            _ => ItemKind::Other,
        }
    }
}

/// One line of at most [`MAX_ITEM_CHARS`] characters.
pub fn clip(text: &str) -> String {
    let line: String = text
        .chars()
        .map(|c| if c == '\n' || c == '\r' || c == '\t' { ' ' } else { c })
        .collect();
    if line.chars().count() <= MAX_ITEM_CHARS {
        return line;
    }
    let mut out: String = line.chars().take(MAX_ITEM_CHARS - 1).collect();
    out.push(ELLIPSIS);
    out
}

/// Number of parent links between two artifacts of one tree.
pub fn tree_distance(session: &Session, a: ArtifactId, b: ArtifactId) -> Option<usize> {
    let chain = |x: ArtifactId| {
        let mut v = vec![x];
        v.extend(session.ancestors(x));
        v
    };
    let (ca, cb) = (chain(a), chain(b));
    ca.iter()
        .enumerate()
        .find_map(|(i, x)| cb.iter().position(|y| y == x).map(|j| i + j))
}

pub fn score(w: &WeightsConfig, kind: ItemKind, distance: usize, recency: Option<usize>) -> f64 {
    w.w_type * kind.weight(&w.kinds)
        + w.w_prox / (1.0 + distance as f64)
        + recency.map_or(0.0, |rank| w.w_rec / (1.0 + rank as f64))
}

pub fn header_summary(session: &Session, id: ArtifactId) -> Option<String> {
    let a = session.artifact(id).ok()?;
    let mut s = format!(
        "{} ({}): {}, {} bytes, {}",
        a.name,
        a.id,
        a.content_type,
        a.data.len(),
        a.provenance.describe()
    );
    if a.content_type.kind == ContentKind::Eml {
        if let Ok(doc) = parse_eml(&a.data) {
            for h in ["Subject", "From"] {
                if let Some(v) = doc.header(h) {
                    s.push_str(&format!("; {h}: {v}"));
                }
            }
        }
    }
    Some(s)
}

/// Candidate items for a prompt about `focus`, most relevant first, ties
/// broken by text.
pub fn build_context(session: &Session, focus: ArtifactId, w: &WeightsConfig) -> Result<Vec<ContextItem>, EngineError> {
    session.artifact(focus)?;
    let names = |id: ArtifactId| session.display_name(id);

    let mut near: BTreeMap<ArtifactId, usize> = BTreeMap::new();
    near.insert(focus, 0);
    for (i, a) in session.ancestors(focus).into_iter().enumerate() {
        near.insert(a, i + 1);
    }
    for &c in session.children(focus) {
        near.insert(c, 1);
    }

    let behavioral: Vec<Fact> = session.facts().iter().filter(|f| f.origin == Origin::Behavioral).collect();
    let mut recency: HashMap<ArtifactId, usize> = HashMap::new();
    for (rank, f) in behavioral.iter().rev().enumerate() {
        for id in f.args.iter().filter_map(Term::as_artifact) {
            recency.entry(id).or_insert(rank);
        }
    }

    let mut items: Vec<ContextItem> = Vec::new();
    let mut push = |text: String, source: ContextSource, artifact: ArtifactId, kind: ItemKind, distance: usize| {
        items.push(ContextItem {
            relevance: score(w, kind, distance, recency.get(&artifact).copied()),
            text: clip(&text),
            source,
            artifact,
        });
    };

    for fact in session.all_facts() {
        if fact.origin == Origin::Behavioral || fact.predicate == "Analyzed" {
            continue;
        }
        let closest = fact
            .args
            .iter()
            .filter_map(Term::as_artifact)
            .filter_map(|id| near.get(&id).map(|d| (*d, id)))
            .min();
        if let Some((distance, id)) = closest {
            let text = fact.atom().display_with(&names);
            push(text, ContextSource::Fact, id, ItemKind::of_fact(&fact), distance);
        }
    }

    for f in session.findings().iter().filter(|f| f.source == focus) {
        push(
            format!("{} found at offset {}: {}", f.kind, f.offset, f.value),
            ContextSource::Finding,
            focus,
            ItemKind::Finding,
            0,
        );
    }

    let data = &session.artifact(focus)?.data;
    let mut strings = extract_strings(data, session.settings().min_string_length);
    strings.sort_by(|a, b| b.value.len().cmp(&a.value.len()).then(a.offset.cmp(&b.offset)));
    for s in strings.into_iter().take(TOP_STRINGS) {
        push(format!("String at {}: {}", s.offset, s.value), ContextSource::StringSample, focus, ItemKind::String, 0);
    }

    for (&id, &distance) in &near {
        if let Some(text) = header_summary(session, id) {
            let source = if id == focus { ContextSource::UserFocus } else { ContextSource::HeaderSummary };
            push(text, source, id, ItemKind::Header, distance);
        }
    }

    let start = behavioral.len().saturating_sub(RECENT_ACTIONS);
    for f in &behavioral[start..] {
        let Some(subject) = f.subject() else { continue };
        let distance = tree_distance(session, focus, subject).unwrap_or(usize::MAX / 2);
        push(
            format!("Analyst action: {}", f.atom().display_with(&names)),
            ContextSource::Fact,
            subject,
            ItemKind::Behavioral,
            distance,
        );
    }

    Ok(rank(items))
}

/// Sorts by relevance descending, then text; keeps the first item per text.
pub fn rank(mut items: Vec<ContextItem>) -> Vec<ContextItem> {
    items.sort_by(|a, b| b.relevance.total_cmp(&a.relevance).then_with(|| a.text.cmp(&b.text)));
    let mut seen = std::collections::HashSet::new();
    items.retain(|i| seen.insert(i.text.clone()));
    items
}
