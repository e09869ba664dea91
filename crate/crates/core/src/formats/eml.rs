//! RFC 5322 messages with MIME multipart bodies.

use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;

use crate::engine::{
    AnalysisResult, Arg, DataIdentifier, IdentifyContext, IdentifyError, ScanScope, ViewKind, ViewerHint,
};
use crate::text;

const MAX_NESTING: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmlError {
    #[error("no blank line separates headers from body")]
    MissingBlankLine,
    #[error("multipart nesting deeper than {MAX_NESTING}")]
    TooDeep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BodyPart {
    pub index: usize,
    pub mime_type: String,
    pub transfer_encoding: String,
    #[serde(skip)]
    pub data: Vec<u8>,
    pub size: usize,
    /// False when the transfer encoding was unknown or invalid and `data`
    /// holds the raw part body.
    pub decoded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Attachment {
    pub index: usize,
    pub filename: String,
    pub mime_type: String,
    pub transfer_encoding: String,
    #[serde(skip)]
    pub data: Vec<u8>,
    pub size: usize,
    pub decoded: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EmailDocument {
    /// Unfolded headers in file order, names as written.
    pub headers: Vec<(String, String)>,
    pub body_parts: Vec<BodyPart>,
    pub attachments: Vec<Attachment>,
    /// Offset of the first body byte.
    pub header_end: usize,
}

impl EmailDocument {
    /// First header with this name, compared case-insensitively.
    pub fn header(&self, name: &str) -> Option<&str> {
        header_lookup(&self.headers, name)
    }

    pub fn body_text(&self) -> String {
        self.body_parts
            .iter()
            .filter(|p| p.mime_type.starts_with("text/"))
            .map(|p| String::from_utf8_lossy(&p.data).into_owned())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn header_lookup<'a>(headers: &'a [(String, String)], name: &str) -> Option<&'a str> {
    headers
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, v)| v.as_str())
}

/// Splits `data` into lines, keeping the offset of each line start. Line
/// content excludes the terminator.
fn lines(data: &[u8]) -> impl Iterator<Item = (usize, &[u8], usize)> {
    let mut pos = 0;
    std::iter::from_fn(move || {
        if pos >= data.len() {
            return None;
        }
        let start = pos;
        let (content_end, next) = match data[pos..].iter().position(|&b| b == b'\n') {
            Some(i) => (start + i, start + i + 1),
            None => (data.len(), data.len()),
        };
        pos = next;
        let line = &data[start..content_end];
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        Some((start, line, next))
    })
}

/// Parses and unfolds the header block; returns the headers and the offset of
/// the body, or `None` when no blank line ends the block.
fn split_headers(data: &[u8]) -> (Vec<(String, String)>, Option<usize>) {
    let mut headers: Vec<(String, String)> = Vec::new();
    for (_, line, next) in lines(data) {
        if line.is_empty() {
            return (headers, Some(next));
        }
        let text = String::from_utf8_lossy(line);
        if line[0] == b' ' || line[0] == b'\t' {
            if let Some((_, v)) = headers.last_mut() {
                v.push_str(&text);
            }
            continue;
        }
        if let Some((name, value)) = text.split_once(':') {
            headers.push((name.trim_end().to_string(), value.trim().to_string()));
        }
    }
    (headers, None)
}

#[derive(Debug, Default)]
struct ContentType {
    mime: String,
    params: Vec<(String, String)>,
}

impl ContentType {
    fn param(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, v)| v.as_str())
    }
}

/// `type/subtype; key=value; key="quoted; value"`.
fn parse_content_type(value: &str) -> ContentType {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for c in value.chars() {
        match c {
            '"' => {
                quoted = !quoted;
                cur.push(c);
            }
            ';' if !quoted => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    let mut it = fields.into_iter();
    let mime = it.next().unwrap_or_default().trim().to_ascii_lowercase();
    let params = it
        .filter_map(|f| {
            let (k, v) = f.split_once('=')?;
            let v = v.trim();
            let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
            Some((k.trim().trim_end_matches('*').to_ascii_lowercase(), v.to_string()))
        })
        .collect();
    ContentType { mime, params }
}

pub fn decode_quoted_printable(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    let mut i = 0;
    while i < data.len() {
        if data[i] != b'=' {
            out.push(data[i]);
            i += 1;
            continue;
        }
        match data.get(i + 1..i + 3) {
            Some(b"\r\n") => i += 3,
            Some([b'\n', _]) => i += 2,
            Some(&[h, l]) if h.is_ascii_hexdigit() && l.is_ascii_hexdigit() => {
                let hex = [h, l];
                out.push(u8::from_str_radix(std::str::from_utf8(&hex).expect("ascii"), 16).expect("hex"));
                i += 3;
            }
            None if data.get(i + 1) == Some(&b'\n') => i += 2,
            _ => {
                out.push(b'=');
                i += 1;
            }
        }
    }
    out
}

/// Decodes a part body; `None` for unknown or invalid encodings.
fn decode_transfer(encoding: &str, body: &[u8]) -> Option<Vec<u8>> {
    match encoding {
        "" | "7bit" | "8bit" | "binary" => Some(body.to_vec()),
        "base64" => text::decode_base64(body).ok().or_else(|| body.iter().all(u8::is_ascii_whitespace).then(Vec::new)),
        "quoted-printable" => Some(decode_quoted_printable(body)),
        _ => None,
    }
}

struct Walker {
    doc: EmailDocument,
    leaves: usize,
}

impl Walker {
    fn part(&mut self, headers: &[(String, String)], body: &[u8], depth: usize) -> Result<(), EmlError> {
        if depth > MAX_NESTING {
            return Err(EmlError::TooDeep);
        }
        let ct = header_lookup(headers, "Content-Type")
            .map(parse_content_type)
            .unwrap_or_else(|| ContentType {
                mime: "text/plain".into(),
                params: Vec::new(),
            });
        if ct.mime.starts_with("multipart/") {
            if let Some(boundary) = ct.param("boundary") {
                for sub in split_multipart(body, boundary) {
                    let (h, start) = split_headers(sub);
                    let body = start.map_or(&[][..], |s| &sub[s..]);
                    self.part(&h, body, depth + 1)?;
                }
                return Ok(());
            }
        }

        self.leaves += 1;
        let index = self.leaves;
        let encoding = header_lookup(headers, "Content-Transfer-Encoding")
            .unwrap_or("")
            .trim()
            .to_ascii_lowercase();
        let (data, decoded) = match decode_transfer(&encoding, body) {
            Some(d) => (d, true),
            None => (body.to_vec(), false),
        };
        let disposition = header_lookup(headers, "Content-Disposition").map(parse_content_type);
        let filename = disposition
            .as_ref()
            .and_then(|d| d.param("filename"))
            .or_else(|| ct.param("name"))
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty());
        let is_attachment = filename.is_some()
            || disposition.as_ref().is_some_and(|d| d.mime == "attachment")
            || !(ct.mime.starts_with("text/") || ct.mime.is_empty());
        let size = data.len();
        if is_attachment {
            self.doc.attachments.push(Attachment {
                index,
                filename: filename.unwrap_or_else(|| format!("part-{index}")),
                mime_type: ct.mime,
                transfer_encoding: encoding,
                data,
                size,
                decoded,
            });
        } else {
            self.doc.body_parts.push(BodyPart {
                index,
                mime_type: ct.mime,
                transfer_encoding: encoding,
                data,
                size,
                decoded,
            });
        }
        Ok(())
    }
}

/// Part bodies between `--boundary` delimiter lines. The line break before
/// each delimiter belongs to the delimiter.
fn split_multipart<'a>(body: &'a [u8], boundary: &str) -> Vec<&'a [u8]> {
    let delim = format!("--{boundary}");
    let mut parts = Vec::new();
    let mut current: Option<usize> = None;
    for (start, line, next) in lines(body) {
        let trimmed = trim_trailing_ws(line);
        let is_close = trimmed.len() == delim.len() + 2
            && trimmed.starts_with(delim.as_bytes())
            && trimmed.ends_with(b"--");
        let is_open = trimmed == delim.as_bytes();
        if !(is_open || is_close) {
            continue;
        }
        if let Some(s) = current.take() {
            let mut end = start;
            if end > s && body[end - 1] == b'\n' {
                end -= 1;
                if end > s && body[end - 1] == b'\r' {
                    end -= 1;
                }
            }
            parts.push(&body[s..end.max(s)]);
        }
        if is_close {
            return parts;
        }
        current = Some(next);
    }
    if let Some(s) = current {
        parts.push(&body[s..]);
    }
    parts
}

fn trim_trailing_ws(line: &[u8]) -> &[u8] {
    let end = line.iter().rposition(|b| !b.is_ascii_whitespace()).map_or(0, |i| i + 1);
    &line[..end]
}

pub fn parse_eml(data: &[u8]) -> Result<EmailDocument, EmlError> {
    let (headers, body_start) = split_headers(data);
    let body_start = body_start.ok_or(EmlError::MissingBlankLine)?;
    let mut w = Walker {
        doc: EmailDocument {
            headers,
            header_end: body_start,
            ..Default::default()
        },
        leaves: 0,
    };
    let headers = w.doc.headers.clone();
    w.part(&headers, &data[body_start..], 0)?;
    Ok(w.doc)
}

fn password_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?i)\b(?:password|passcode|pass|pwd)\b\s*(?:is|:|=)?\s*["'“]?([^\s"'”]{3,64})"#)
            .expect("valid pattern")
    })
}

/// Password-like tokens announced in free text ("the password is X").
pub fn password_candidates(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for cap in password_regex().captures_iter(text) {
        let raw = cap[1].trim_end_matches(['.', ',', ';', ':', '!', '?', ')']);
        let lower = raw.to_ascii_lowercase();
        if raw.len() < 3 || matches!(lower.as_str(), "is" | "for" | "the" | "word") {
            continue;
        }
        if !out.iter().any(|p| p == raw) {
            out.push(raw.to_string());
        }
    }
    out
}

pub struct EmlIdentifier;

impl DataIdentifier for EmlIdentifier {
    fn name(&self) -> &'static str {
        "eml"
    }

    fn identify(&self, data: &[u8], _cx: &IdentifyContext<'_>) -> Result<AnalysisResult, IdentifyError> {
        let doc = parse_eml(data).map_err(|e| IdentifyError::Parse(e.to_string()))?;
        let mut r = AnalysisResult {
            scan: ScanScope::Range(0, doc.header_end),
            ..Default::default()
        };
        r.viewer_hints.push(ViewerHint::region(ViewKind::Table, 0, doc.header_end as u64, "headers"));

        let body_text = doc.body_text();
        if !body_text.trim().is_empty() {
            r.flag("ContainsText");
        }
        for pw in password_candidates(&body_text) {
            r.fact("PasswordCandidate", vec![Arg::This, pw.into()]);
        }
        for p in &doc.body_parts {
            if !p.decoded {
                r.fact("UndecodedPart", vec![Arg::This, Arg::Int(p.index as i64)]);
            }
            if p.data.is_empty() {
                continue;
            }
            let ext = if p.mime_type == "text/html" { "html" } else { "txt" };
            r.child(format!("body-{}.{ext}", p.index), p.data.clone(), format!("mime:{}", p.index));
        }
        for a in &doc.attachments {
            if !a.decoded {
                r.fact("UndecodedPart", vec![Arg::This, Arg::Int(a.index as i64)]);
            }
            if a.data.is_empty() {
                continue;
            }
            let child = r.child(a.filename.clone(), a.data.clone(), format!("mime:{}", a.index));
            r.fact("HasAttachment", vec![Arg::This, child]);
        }
        Ok(r)
    }

    fn structured(&self, data: &[u8]) -> Result<serde_json::Value, IdentifyError> {
        let doc = parse_eml(data).map_err(|e| IdentifyError::Parse(e.to_string()))?;
        serde_json::to_value(doc).map_err(|e| IdentifyError::Parse(e.to_string()))
    }
}
