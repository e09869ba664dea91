use std::collections::BTreeMap;

use super::identifier::{Arg, FactSpec, TransformKind};
use crate::config::AnalysisSettings;
use crate::formats::zip::{extract_zip_entry, parse_zip, ZipError};
use crate::text::{self, TextError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Zip(#[from] ZipError),
    #[error("missing parameter {0:?}")]
    MissingParam(&'static str),
    #[error("invalid parameter {name:?}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("no single-byte key yields printable output")]
    NoCandidate,
    #[error("archive has no entry {0:?}")]
    NoSuchEntry(String),
    #[error("transform produced no bytes")]
    EmptyOutput,
}

/// Bytes produced by a transform plus facts about its input.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformOutput {
    pub name: String,
    pub data: Vec<u8>,
    /// `Arg::This` refers to the transform target.
    pub facts: Vec<FactSpec>,
}

fn parse_key(raw: &str) -> Result<u8, TransformError> {
    let t = raw.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(h) => u8::from_str_radix(h, 16),
        None => t.parse(),
    };
    match parsed {
        Ok(0) | Err(_) => Err(TransformError::InvalidParam {
            name: "key",
            reason: format!("{raw:?} is not a key in 1..=255"),
        }),
        Ok(k) => Ok(k),
    }
}

fn base_name(path: &str) -> &str {
    path.rsplit(['/', '\\']).next().filter(|s| !s.is_empty()).unwrap_or(path)
}

/// Runs one transform over `data` (the bytes of an artifact named `name`).
pub fn execute_transform(
    kind: TransformKind,
    name: &str,
    data: &[u8],
    params: &BTreeMap<String, String>,
    settings: &AnalysisSettings,
) -> Result<TransformOutput, TransformError> {
    let mut facts = Vec::new();
    let (name, bytes) = match kind {
        TransformKind::DecodeBase64 => (format!("{name}.b64"), text::decode_base64(data)?),
        TransformKind::DecodeHex => (format!("{name}.unhex"), text::decode_hex(data)?),
        TransformKind::DecodeUrl => (format!("{name}.unurl"), text::decode_url(data)?),
        TransformKind::XorBruteForce => {
            let key = match params.get("key") {
                Some(k) => parse_key(k)?,
                None => text::xor_brute(data, settings.xor_min_score)?
                    .first()
                    .map(|c| c.key)
                    .ok_or(TransformError::NoCandidate)?,
            };
            (format!("{name}.xor{key:02x}"), text::xor_bytes(data, key))
        }
        TransformKind::JsCharCodeDecode => {
            let source = String::from_utf8_lossy(data);
            let decoded = text::js_charcode_decode(&source)?;
            for url in &decoded.new_urls {
                facts.push(FactSpec::new("DeobfuscatedUrl", vec![Arg::This, Arg::Str(url.clone())]));
            }
            if decoded.undecoded_calls > 0 {
                facts.push(FactSpec::unary("UndecodedCall"));
            }
            (format!("{name}.deobf"), decoded.text.into_bytes())
        }
        TransformKind::TryArchivePassword => {
            let password = params.get("password").ok_or(TransformError::MissingParam("password"))?;
            let listing = parse_zip(data)?;
            let entry = match params.get("entry") {
                Some(path) => listing
                    .entries
                    .iter()
                    .find(|e| &e.path == path)
                    .ok_or_else(|| TransformError::NoSuchEntry(path.clone()))?,
                None => listing
                    .entries
                    .iter()
                    .find(|e| e.is_encrypted)
                    .or(listing.entries.first())
                    .ok_or_else(|| TransformError::NoSuchEntry("<any>".into()))?,
            };
            let plain = extract_zip_entry(data, entry, Some(password))?;
            (base_name(&entry.path).to_string(), plain)
        }
    };
    if bytes.is_empty() {
        return Err(TransformError::EmptyOutput);
    }
    Ok(TransformOutput { name, data: bytes, facts })
}
