use serde::{Deserialize, Serialize};

pub const DEFAULT_MIN_LENGTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StringEncoding {
    Ascii,
    Utf16Le,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedString {
    pub value: String,
    pub offset: usize,
    pub encoding: StringEncoding,
}

pub(crate) fn is_printable_ascii(b: u8) -> bool {
    (0x20..=0x7E).contains(&b)
}

/// Printable for text heuristics: visible ASCII plus tab, CR and LF.
pub(crate) fn is_text_byte(b: u8) -> bool {
    is_printable_ascii(b) || matches!(b, b'\t' | b'\n' | b'\r')
}

pub(crate) fn printable_ratio(data: &[u8]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    data.iter().filter(|b| is_text_byte(**b)).count() as f64 / data.len() as f64
}

/// Maximal printable ASCII runs and UTF-16LE runs (printable byte followed
/// by NUL) of at least `min_length` characters, ordered by offset.
pub fn extract_strings(data: &[u8], min_length: usize) -> Vec<ExtractedString> {
    let min_length = min_length.max(1);
    let mut out = Vec::new();

    let mut start = None;
    for (i, &b) in data.iter().chain(std::iter::once(&0u8)).enumerate() {
        let printable = i < data.len() && is_printable_ascii(b);
        match (printable, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_length {
                    out.push(ExtractedString {
                        value: String::from_utf8_lossy(&data[s..i]).into_owned(),
                        offset: s,
                        encoding: StringEncoding::Ascii,
                    });
                }
                start = None;
            }
            _ => {}
        }
    }

    let mut i = 0;
    while i + 1 < data.len() {
        if is_printable_ascii(data[i]) && data[i + 1] == 0 {
            let s = i;
            let mut value = String::new();
            while i + 1 < data.len() && is_printable_ascii(data[i]) && data[i + 1] == 0 {
                value.push(data[i] as char);
                i += 2;
            }
            if value.len() >= min_length {
                out.push(ExtractedString {
                    value,
                    offset: s,
                    encoding: StringEncoding::Utf16Le,
                });
            }
        } else {
            i += 1;
        }
    }

    out.sort_by_key(|s| (s.offset, s.encoding));
    out
}
