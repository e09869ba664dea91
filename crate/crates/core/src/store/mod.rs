//! Session files: a self-contained JSON snapshot plus the event log that
//! produced it.
//!
//! Canonical form: top-level fields in the order of [`SessionFile`], every
//! object's keys sorted, two-space indentation, artifact bytes as unwrapped
//! standard base64, trailing newline. Loading replays the log and refuses
//! the file unless the replay reproduces the snapshot.

mod report;

pub use report::{export_report, ReportFormat};

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::AnalysisSettings;
use crate::engine::{Artifact, ArtifactId, ChatTurn, EngineError, LogEvent, Note, Registry, Session};
use crate::formats::default_registry;
use crate::inference::{Fact, RuleSet, Term};
use crate::text::Finding;

pub const SCHEMA_VERSION: u64 = 1;
pub const EXTENSION: &str = "gvs";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unsupported session schema version {0}")]
    Version(u64),
    #[error("malformed session file: {0}")]
    Format(String),
    #[error("session file is corrupt: {0}")]
    Corruption(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub schema_version: u64,
    pub session_id: String,
    pub settings: AnalysisSettings,
    /// Source of every loaded rule pack, in load order.
    pub rules: String,
    pub artifacts: Vec<Artifact>,
    /// Analysis and behavioral facts; derived facts are recomputed.
    pub facts: Vec<Fact>,
    pub findings: Vec<Finding>,
    pub events: Vec<LogEvent>,
    pub suggestions: Vec<String>,
    pub notes: Vec<Note>,
    pub chat: Vec<ChatTurn>,
}

impl SessionFile {
    pub fn snapshot(session: &Session) -> Self {
        SessionFile {
            schema_version: SCHEMA_VERSION,
            session_id: session.id().to_string(),
            settings: session.settings().clone(),
            rules: session.rules().source(),
            artifacts: session.artifacts().cloned().collect(),
            facts: session.facts().iter().collect(),
            findings: session.findings().to_vec(),
            events: session.log().to_vec(),
            suggestions: suggestion_texts(session),
            notes: session.notes().to_vec(),
            chat: session.chat_history().to_vec(),
        }
    }
}

fn suggestion_texts(session: &Session) -> Vec<String> {
    session
        .suggestions()
        .map(|s| s.iter().map(|s| s.text.clone()).collect())
        .unwrap_or_default()
}

/// Rebuilds `value` with every object's keys in sorted order.
fn sort_keys(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        v => v,
    }
}

/// Canonical bytes of a session file.
pub fn encode(session: &Session) -> Result<Vec<u8>, StoreError> {
    session.check_tree().map_err(StoreError::Corruption)?;
    let file = SessionFile::snapshot(session);
    let fields = serde_json::to_value(&file).map_err(|e| StoreError::Format(e.to_string()))?;
    let serde_json::Value::Object(mut map) = fields else {
        unreachable!("SessionFile serializes to an object")
    };
    // Top level keeps declaration order; nested objects are sorted.
    let mut out = String::from("{\n");
    let names = [
        "schema_version",
        "session_id",
        "settings",
        "rules",
        "artifacts",
        "facts",
        "findings",
        "events",
        "suggestions",
        "notes",
        "chat",
    ];
    for (i, name) in names.iter().enumerate() {
        let v = sort_keys(map.remove(*name).expect("every field is serialized"));
        let body = serde_json::to_string_pretty(&v).map_err(|e| StoreError::Format(e.to_string()))?;
        out.push_str(&format!("  {}: {}", serde_json::Value::from(*name), body.replace('\n', "\n  ")));
        out.push_str(if i + 1 < names.len() { ",\n" } else { "\n" });
    }
    debug_assert!(map.is_empty());
    out.push_str("}\n");
    Ok(out.into_bytes())
}

/// Writes the canonical form atomically and returns the byte count.
pub fn save(session: &Session, destination: &Path) -> Result<usize, StoreError> {
    let bytes = encode(session)?;
    write_atomic(destination, &bytes, || Ok(()))?;
    Ok(bytes.len())
}

/// Writes to a temporary file next to `path`, then renames it into place.
/// `before_rename` runs between the two steps; an error from it abandons the
/// write and leaves any existing file untouched.
pub(crate) fn write_atomic(
    path: &Path,
    bytes: &[u8],
    before_rename: impl FnOnce() -> std::io::Result<()>,
) -> Result<(), StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    before_rename().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn load(source: &Path) -> Result<Session, StoreError> {
    let bytes = std::fs::read(source).map_err(|e| StoreError::Io {
        path: source.to_path_buf(),
        source: e,
    })?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<Session, StoreError> {
    decode_with(bytes, Arc::new(default_registry()))
}

pub fn decode_with(bytes: &[u8], registry: Arc<Registry>) -> Result<Session, StoreError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| StoreError::Format(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| StoreError::Format("missing schema_version".into()))?;
    if version != SCHEMA_VERSION {
        return Err(StoreError::Version(version));
    }
    let file: SessionFile = serde_json::from_value(value).map_err(|e| StoreError::Format(e.to_string()))?;
    check_references(&file)?;
    let rules = RuleSet::parse(&file.rules).map_err(|e| StoreError::Corruption(format!("rule packs: {e}")))?;
    let mut session = Session::new(file.session_id.clone(), rules, registry, file.settings.clone());
    for event in file.events.iter().cloned() {
        let seq = event.seq;
        session
            .replay_event(event)
            .map_err(|e| StoreError::Corruption(format!("event {seq}: {e}")))?;
    }
    session.refresh();
    cross_check(&file, &session)?;
    Ok(session)
}

fn check_references(file: &SessionFile) -> Result<(), StoreError> {
    let mut ids = std::collections::BTreeSet::new();
    for a in &file.artifacts {
        if !ids.insert(a.id) {
            return Err(StoreError::Corruption(format!("artifact {} appears twice", a.id)));
        }
    }
    let missing = |what: String, id: ArtifactId| StoreError::Corruption(format!("{what} references missing artifact {id}"));
    for a in &file.artifacts {
        if let Some(p) = a.provenance.parent().filter(|p| !ids.contains(p)) {
            return Err(missing(format!("artifact {}", a.id), p));
        }
    }
    for (i, f) in file.facts.iter().enumerate() {
        if let Some(id) = f.args.iter().filter_map(Term::as_artifact).find(|id| !ids.contains(id)) {
            return Err(missing(format!("fact {i} {f}"), id));
        }
    }
    for (i, f) in file.findings.iter().enumerate() {
        if !ids.contains(&f.source) {
            return Err(missing(format!("finding {i}"), f.source));
        }
    }
    for (i, n) in file.notes.iter().enumerate() {
        if !ids.contains(&n.artifact) {
            return Err(missing(format!("note {i}"), n.artifact));
        }
    }
    Ok(())
}

/// First position where two sequences differ, if any.
fn divergence<T: PartialEq>(a: &[T], b: &[T]) -> Option<usize> {
    (0..a.len().max(b.len())).find(|&i| a.get(i) != b.get(i))
}

fn cross_check(file: &SessionFile, session: &Session) -> Result<(), StoreError> {
    let replayed = SessionFile::snapshot(session);
    let describe = |what: &str, i: usize, snap: Option<String>, log: Option<String>| {
        let show = |v: Option<String>| v.unwrap_or_else(|| "nothing".into());
        StoreError::Corruption(format!(
            "{what} record {i} diverges from the event log: snapshot has {}, log gives {}",
            show(snap),
            show(log)
        ))
    };
    if let Some(i) = divergence(&file.artifacts, &replayed.artifacts) {
        let d = |a: Option<&Artifact>| a.map(|a| format!("{} {:?}", a.id, a.name));
        return Err(describe("artifact", i, d(file.artifacts.get(i)), d(replayed.artifacts.get(i))));
    }
    if let Some(i) = divergence(&file.facts, &replayed.facts) {
        let d = |f: Option<&Fact>| f.map(Fact::to_string);
        return Err(describe("fact", i, d(file.facts.get(i)), d(replayed.facts.get(i))));
    }
    if let Some(i) = divergence(&file.findings, &replayed.findings) {
        let d = |f: Option<&Finding>| f.map(|f| format!("{} {:?}", f.kind, f.value));
        return Err(describe("finding", i, d(file.findings.get(i)), d(replayed.findings.get(i))));
    }
    if let Some(i) = divergence(&file.notes, &replayed.notes) {
        let d = |n: Option<&Note>| n.map(|n| format!("{:?} note on {}", n.kind, n.artifact));
        return Err(describe("note", i, d(file.notes.get(i)), d(replayed.notes.get(i))));
    }
    if let Some(i) = divergence(&file.chat, &replayed.chat) {
        let d = |t: Option<&ChatTurn>| t.map(|t| format!("{:?} turn", t.role));
        return Err(describe("chat", i, d(file.chat.get(i)), d(replayed.chat.get(i))));
    }
    if let Some(i) = divergence(&file.suggestions, &replayed.suggestions) {
        let d = |s: Option<&String>| s.map(|s| format!("{s:?}"));
        return Err(describe("suggestion", i, d(file.suggestions.get(i)), d(replayed.suggestions.get(i))));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Session {
        let mut s = Session::with_defaults("sample");
        s.open("note.txt", b"see http://evil.example/x and 10.0.0.7\n".to_vec()).unwrap();
        let r = s.root().unwrap();
        s.view_strings(r, None).unwrap();
        s
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let s = sample();
        let a = encode(&s).unwrap();
        let loaded = decode(&a).unwrap();
        assert_eq!(encode(&loaded).unwrap(), a);
        assert_eq!(encode(&s).unwrap(), a);
        assert_eq!(loaded.log(), s.log());
    }

    #[test]
    fn version_is_checked() {
        let mut v: serde_json::Value = serde_json::from_slice(&encode(&sample()).unwrap()).unwrap();
        v["schema_version"] = 99.into();
        let err = decode(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(matches!(err, StoreError::Version(99)));
    }

    #[test]
    fn removed_fact_is_corruption() {
        let mut v: serde_json::Value = serde_json::from_slice(&encode(&sample()).unwrap()).unwrap();
        let facts = v["facts"].as_array_mut().unwrap();
        let removed = facts.remove(1);
        let err = decode(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        let StoreError::Corruption(msg) = err else { panic!("{err:?}") };
        assert!(msg.starts_with("fact record 1 diverges"), "{msg}");
        assert!(removed.is_object());
    }

    #[test]
    fn dangling_reference_is_corruption() {
        let mut v: serde_json::Value = serde_json::from_slice(&encode(&sample()).unwrap()).unwrap();
        v["notes"] = serde_json::json!([{"artifact": "a9", "kind": "Summary", "text": "x"}]);
        let err = decode(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(err.to_string().contains("missing artifact a9"), "{err}");
    }

    #[test]
    fn interrupted_write_keeps_old_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.gvs");
        std::fs::write(&path, b"old").unwrap();
        let err = write_atomic(&path, b"new", || Err(std::io::Error::other("killed"))).unwrap_err();
        assert!(matches!(err, StoreError::Io { .. }));
        assert_eq!(std::fs::read(&path).unwrap(), b"old");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn unwritable_destination() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("s.gvs");
        assert!(matches!(save(&sample(), &path), Err(StoreError::Io { .. })));
        assert!(!path.exists());
    }
}
