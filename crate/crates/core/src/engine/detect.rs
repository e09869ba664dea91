use super::artifact::{Confidence, ContentKind, ContentType};
use crate::text::printable_ratio;

pub const DEFAULT_TEXT_RATIO: f64 = 0.9;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];
const EML_SCAN: usize = 2048;
const TEXT_SCAN: usize = 4096;

/// Ordered magic table; the first match wins.
const MAGIC: &[(&[u8], ContentKind)] = &[
    (b"MZ", ContentKind::Pe),
    (b"PK\x03\x04", ContentKind::Zip),
    (b"PK\x05\x06", ContentKind::Zip),
    (&[0xD4, 0xC3, 0xB2, 0xA1], ContentKind::Pcap),
    (&[0xA1, 0xB2, 0xC3, 0xD4], ContentKind::Pcap),
    (&PNG_SIGNATURE, ContentKind::Png),
];

fn looks_like_email(data: &[u8]) -> bool {
    let head = &data[..data.len().min(EML_SCAN)];
    for line in head.split(|&b| b == b'\n') {
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if line.is_empty() {
            return false;
        }
        let matches = |prefix: &[u8]| {
            line.len() >= prefix.len() && line[..prefix.len()].eq_ignore_ascii_case(prefix)
        };
        if matches(b"From:") || matches(b"Received:") || matches(b"Content-Type:") {
            return true;
        }
    }
    false
}

pub fn detect_type(data: &[u8]) -> ContentType {
    detect_type_with(data, DEFAULT_TEXT_RATIO)
}

/// Magic numbers first, then the e-mail header heuristic, then the
/// printable-ratio test for text.
pub fn detect_type_with(data: &[u8], text_ratio: f64) -> ContentType {
    for (magic, kind) in MAGIC {
        if data.starts_with(magic) {
            return ContentType::new(*kind, Confidence::Magic);
        }
    }
    if looks_like_email(data) {
        return ContentType::new(ContentKind::Eml, Confidence::Heuristic);
    }
    if !data.is_empty() && printable_ratio(&data[..data.len().min(TEXT_SCAN)]) >= text_ratio {
        return ContentType::new(ContentKind::ScriptText, Confidence::Heuristic);
    }
    ContentType::generic()
}
