use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Session-scoped artifact handle, written `a<n>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArtifactId(u64);

impl ArtifactId {
    pub const fn new(n: u64) -> Self {
        Self(n)
    }

    pub const fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for ArtifactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid artifact id {0:?}")]
pub struct ParseArtifactIdError(pub String);

impl FromStr for ArtifactId {
    type Err = ParseArtifactIdError;

    /// Accepts `a7`, `@a7` and `7`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let t = t.strip_prefix('@').unwrap_or(t);
        let digits = t.strip_prefix('a').unwrap_or(t);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseArtifactIdError(s.to_string()));
        }
        digits
            .parse()
            .map(ArtifactId)
            .map_err(|_| ParseArtifactIdError(s.to_string()))
    }
}

impl Serialize for ArtifactId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ArtifactId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum Provenance {
    RootUpload,
    ExtractedChild {
        parent: ArtifactId,
        locator: String,
    },
    UserSelection {
        parent: ArtifactId,
        offset: u64,
        length: u64,
    },
}

impl Provenance {
    pub fn parent(&self) -> Option<ArtifactId> {
        match self {
            Provenance::RootUpload => None,
            Provenance::ExtractedChild { parent, .. } | Provenance::UserSelection { parent, .. } => {
                Some(*parent)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Provenance::RootUpload => "root upload".to_string(),
            Provenance::ExtractedChild { parent, locator } => format!("extracted from {parent} at {locator}"),
            Provenance::UserSelection { parent, offset, length } => {
                format!("selection of {parent} [{offset}, +{length})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContentKind {
    Pe,
    Zip,
    Eml,
    Pcap,
    ScriptText,
    Png,
    GenericBinary,
}

impl ContentKind {
    pub const ALL: [ContentKind; 7] = [
        ContentKind::Pe,
        ContentKind::Zip,
        ContentKind::Eml,
        ContentKind::Pcap,
        ContentKind::ScriptText,
        ContentKind::Png,
        ContentKind::GenericBinary,
    ];

    /// Predicate of the type fact emitted on analysis.
    pub fn type_predicate(self) -> &'static str {
        match self {
            ContentKind::Pe => "IsExecutable",
            ContentKind::Zip => "IsArchive",
            ContentKind::Eml => "IsEmail",
            ContentKind::Pcap => "IsCapture",
            ContentKind::ScriptText => "IsScript",
            ContentKind::Png => "IsImage",
            ContentKind::GenericBinary => "IsUnknown",
        }
    }
}

impl fmt::Display for ContentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ContentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ContentKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown content kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Confidence {
    Magic,
    Heuristic,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContentType {
    pub kind: ContentKind,
    pub confidence: Confidence,
}

impl ContentType {
    pub const fn new(kind: ContentKind, confidence: Confidence) -> Self {
        Self { kind, confidence }
    }

    pub const fn generic() -> Self {
        Self::new(ContentKind::GenericBinary, Confidence::Fallback)
    }
}

impl fmt::Display for ContentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{:?}", self.kind, self.confidence)
    }
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(data: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(data))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s.as_bytes()).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: ArtifactId,
    pub name: String,
    #[serde(with = "base64_bytes")]
    pub data: Vec<u8>,
    pub content_type: ContentType,
    pub provenance: Provenance,
    pub metadata: BTreeMap<String, String>,
    pub analyzed: bool,
}

impl Artifact {
    pub fn parent(&self) -> Option<ArtifactId> {
        self.provenance.parent()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_forms() {
        assert_eq!("a7".parse::<ArtifactId>().unwrap(), ArtifactId::new(7));
        assert_eq!("7".parse::<ArtifactId>().unwrap(), ArtifactId::new(7));
        assert_eq!("@a7".parse::<ArtifactId>().unwrap(), ArtifactId::new(7));
        assert!("b7".parse::<ArtifactId>().is_err());
        assert!("a".parse::<ArtifactId>().is_err());
        assert_eq!(serde_json::to_string(&ArtifactId::new(3)).unwrap(), "\"a3\"");
    }

    #[test]
    fn artifact_bytes_are_base64() {
        let a = Artifact {
            id: ArtifactId::new(1),
            name: "x".into(),
            data: b"MZ".to_vec(),
            content_type: ContentType::new(ContentKind::Pe, Confidence::Magic),
            provenance: Provenance::RootUpload,
            metadata: BTreeMap::new(),
            analyzed: false,
        };
        let json = serde_json::to_string(&a).unwrap();
        assert!(json.contains("\"data\":\"TVo=\""));
        assert_eq!(serde_json::from_str::<Artifact>(&json).unwrap(), a);
    }
}
