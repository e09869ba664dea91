use crate::engine::{AnalysisResult, DataIdentifier, IdentifyContext, IdentifyError, TransformKind, ViewKind, ViewerHint};
use crate::text;

/// Shortest whitespace-free body considered for the encoded-blob flags.
const MIN_BLOB: usize = 8;

fn compact(data: &[u8]) -> Vec<u8> {
    data.iter().copied().filter(|b| !b.is_ascii_whitespace()).collect()
}

/// The whole text is an even run of hex digits.
pub fn looks_hex(data: &[u8]) -> bool {
    let c = compact(data);
    c.len() >= MIN_BLOB && c.len().is_multiple_of(2) && c.iter().all(u8::is_ascii_hexdigit)
}

/// The whole text is base64 in complete quanta, possibly wrapped over
/// several lines, and is not plain hex.
pub fn looks_base64(data: &[u8]) -> bool {
    let c = compact(data);
    let wrapped_only = !data.iter().any(|&b| b == b' ' || b == b'\t');
    wrapped_only && c.len() >= MIN_BLOB && c.len().is_multiple_of(4) && !looks_hex(data) && text::decode_base64(&c).is_ok()
}

/// Text and script content: flags encoded blobs and obfuscated calls and
/// proposes the matching decoder.
pub struct ScriptIdentifier;

impl DataIdentifier for ScriptIdentifier {
    fn name(&self) -> &'static str {
        "script"
    }

    fn identify(&self, data: &[u8], _cx: &IdentifyContext<'_>) -> Result<AnalysisResult, IdentifyError> {
        let mut r = AnalysisResult::default();
        r.viewer_hints.push(ViewerHint::new(ViewKind::Text, "source"));
        let source = String::from_utf8_lossy(data);
        if text::uses_charcode_obfuscation(&source) {
            r.flag("UsesCharCodeObfuscation");
            r.delegate(TransformKind::JsCharCodeDecode);
        }
        if looks_hex(data) {
            r.flag("LooksHex");
            r.delegate(TransformKind::DecodeHex);
        } else if looks_base64(data) {
            r.flag("LooksBase64");
            r.delegate(TransformKind::DecodeBase64);
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_flags() {
        assert!(looks_hex(b"4d5a9000 0300"));
        assert!(!looks_base64(b"4d5a90000300"));
        assert!(looks_base64(b"aGVsbG8gd29ybGQ="));
        assert!(!looks_base64(b"hello world"));
        assert!(!looks_hex(b"abc"));
    }
}
