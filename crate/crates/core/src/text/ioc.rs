//! Indicator extraction over extracted strings.
//!
//! Every emitted value re-matches [`IocKind::matches`]. Wallet detection is
//! alphabet/length only; Base58Check checksums are not verified.

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::strings::{ExtractedString, StringEncoding};
use crate::engine::ArtifactId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IocKind {
    Url,
    Ipv4,
    RegistryKey,
    WalletAddress,
    FilePath,
}

impl IocKind {
    pub const ALL: [IocKind; 5] = [
        IocKind::Url,
        IocKind::Ipv4,
        IocKind::RegistryKey,
        IocKind::WalletAddress,
        IocKind::FilePath,
    ];

    /// Predicate of the fact emitted for an indicator of this kind.
    pub fn fact_predicate(self) -> &'static str {
        match self {
            IocKind::Url => "ContainsUrl",
            IocKind::Ipv4 => "ContainsIp",
            IocKind::RegistryKey => "ContainsRegistryKey",
            IocKind::WalletAddress => "ContainsWallet",
            IocKind::FilePath => "ContainsFilePath",
        }
    }

    /// Whether `value` as a whole conforms to this kind's pattern.
    pub fn matches(self, value: &str) -> bool {
        match self {
            IocKind::Url => anchored(&URL_ANCHORED, URL_PATTERN).is_match(value),
            IocKind::Ipv4 => is_ipv4(value),
            IocKind::RegistryKey => anchored(&REG_ANCHORED, REG_PATTERN).is_match(value),
            IocKind::WalletAddress => {
                anchored(&BASE58_ANCHORED, BASE58_PATTERN).is_match(value)
                    || anchored(&BECH32_ANCHORED, BECH32_PATTERN).is_match(value)
            }
            IocKind::FilePath => anchored(&PATH_ANCHORED, PATH_PATTERN).is_match(value),
        }
    }
}

impl fmt::Display for IocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// An indicator found in a string, before it is tied to an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IocMatch {
    pub kind: IocKind,
    pub value: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Finding {
    pub kind: IocKind,
    pub value: String,
    pub source: ArtifactId,
    pub offset: usize,
}

impl Finding {
    pub fn new(source: ArtifactId, m: IocMatch) -> Self {
        Self {
            kind: m.kind,
            value: m.value,
            source,
            offset: m.offset,
        }
    }
}

const URL_PATTERN: &str = r"(?i:https?)://[A-Za-z0-9](?:[A-Za-z0-9.\-]*[A-Za-z0-9])?(?::[0-9]{1,5})?(?:[/?#][A-Za-z0-9\-._~%!$&'*+,;=:@/?#]*)?";
const REG_PATTERN: &str = r#"(?:HKEY_LOCAL_MACHINE|HKEY_CURRENT_USER|HKCU|HKLM)\\[^\\\s"'<>|]+(?:\\[^\\\s"'<>|]+)*"#;
const BASE58_PATTERN: &str = r"[13][1-9A-HJ-NP-Za-km-z]{25,34}";
const BECH32_PATTERN: &str = r"bc1[ac-hj-np-z02-9]{11,71}";
const PATH_PATTERN: &str = r#"[A-Za-z]:\\(?:[^\\/:*?"<>|\s]+\\)*[^\\/:*?"<>|\s]+"#;

static URL_RE: OnceLock<Regex> = OnceLock::new();
static REG_RE: OnceLock<Regex> = OnceLock::new();
static PATH_RE: OnceLock<Regex> = OnceLock::new();
static URL_ANCHORED: OnceLock<Regex> = OnceLock::new();
static REG_ANCHORED: OnceLock<Regex> = OnceLock::new();
static BASE58_ANCHORED: OnceLock<Regex> = OnceLock::new();
static BECH32_ANCHORED: OnceLock<Regex> = OnceLock::new();
static PATH_ANCHORED: OnceLock<Regex> = OnceLock::new();

fn compiled(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("valid pattern"))
}

fn anchored(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(&format!("^(?:{pattern})$")).expect("valid pattern"))
}

fn is_ipv4(value: &str) -> bool {
    let parts: Vec<&str> = value.split('.').collect();
    parts.len() == 4
        && parts.iter().all(|p| {
            !p.is_empty() && p.len() <= 3 && p.bytes().all(|b| b.is_ascii_digit()) && p.parse::<u16>().is_ok_and(|n| n <= 255)
        })
}

fn trim_trailing(value: &str, chars: &[char]) -> usize {
    value.trim_end_matches(chars).len()
}

fn preceded_by_word(s: &str, start: usize) -> bool {
    s[..start]
        .chars()
        .next_back()
        .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Byte offset in the source buffer of character index `idx` in `s`.
fn source_offset(s: &ExtractedString, idx: usize) -> usize {
    match s.encoding {
        StringEncoding::Ascii => s.offset + idx,
        StringEncoding::Utf16Le => s.offset + 2 * idx,
    }
}

fn scan(s: &ExtractedString, out: &mut Vec<IocMatch>) {
    let text = s.value.as_str();
    let mut push = |kind: IocKind, start: usize, value: &str| {
        if kind.matches(value) {
            out.push(IocMatch {
                kind,
                value: value.to_string(),
                offset: source_offset(s, start),
            });
        }
    };

    for m in compiled(&URL_RE, URL_PATTERN).find_iter(text) {
        if preceded_by_word(text, m.start()) {
            continue;
        }
        let len = trim_trailing(m.as_str(), &['.', ',', ';', ':', '!', '?', '\'']);
        push(IocKind::Url, m.start(), &m.as_str()[..len]);
    }

    // maximal runs of digits and dots, so "1.2.3.4.5" and "1234.1.1.1" never match
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() || bytes[i] == b'.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let run = &text[start..i];
            let lead = run.len() - run.trim_start_matches('.').len();
            let core = run.trim_matches('.');
            if is_ipv4(core) {
                push(IocKind::Ipv4, start + lead, core);
            }
        } else {
            i += 1;
        }
    }

    for m in compiled(&REG_RE, REG_PATTERN).find_iter(text) {
        if preceded_by_word(text, m.start()) {
            continue;
        }
        let len = trim_trailing(m.as_str(), &['.', ',', ';']);
        push(IocKind::RegistryKey, m.start(), &m.as_str()[..len]);
    }

    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_alphanumeric() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let token = &text[start..i];
            if token.starts_with(['1', '3']) || token.starts_with("bc1") {
                push(IocKind::WalletAddress, start, token);
            }
        } else {
            i += 1;
        }
    }

    for m in compiled(&PATH_RE, PATH_PATTERN).find_iter(text) {
        if preceded_by_word(text, m.start()) {
            continue;
        }
        let len = trim_trailing(m.as_str(), &['.', ',', ';']);
        push(IocKind::FilePath, m.start(), &m.as_str()[..len]);
    }
}

/// Finds indicators in `strings`, keeping the first occurrence of each
/// `(kind, value)` pair, ordered by offset then kind.
pub fn extract_iocs(strings: &[ExtractedString]) -> Vec<IocMatch> {
    let mut all = Vec::new();
    for s in strings {
        scan(s, &mut all);
    }
    all.sort_by_key(|a| (a.offset, a.kind));
    let mut seen = HashSet::new();
    all.retain(|m| seen.insert((m.kind, m.value.clone())));
    all
}

/// Scans a decoded text as a single ASCII string at offset 0.
pub fn extract_iocs_from_text(text: &str) -> Vec<IocMatch> {
    extract_iocs(&[ExtractedString {
        value: text.to_string(),
        offset: 0,
        encoding: StringEncoding::Ascii,
    }])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::extract_strings;
    use proptest::prelude::*;

    fn iocs(text: &str) -> Vec<(IocKind, String)> {
        extract_iocs(&extract_strings(text.as_bytes(), 4))
            .into_iter()
            .map(|m| (m.kind, m.value))
            .collect()
    }

    #[test]
    fn url_in_sentence() {
        assert_eq!(
            iocs("connect to http://evil.test/a.js now"),
            vec![(IocKind::Url, "http://evil.test/a.js".to_string())]
        );
    }

    #[test]
    fn url_trailing_punctuation_is_trimmed() {
        assert_eq!(
            iocs("see https://x.example/p?q=1."),
            vec![(IocKind::Url, "https://x.example/p?q=1".to_string())]
        );
    }

    #[test]
    fn ipv4_octet_bound() {
        assert!(iocs("256.1.1.1").is_empty());
        assert!(iocs("host 1.2.3.4.5 x").is_empty());
        assert_eq!(iocs("c2 at 185.12.0.7."), vec![(IocKind::Ipv4, "185.12.0.7".to_string())]);
    }

    #[test]
    fn registry_key() {
        assert_eq!(
            iocs(r"HKCU\Software\Run\upd"),
            vec![(IocKind::RegistryKey, r"HKCU\Software\Run\upd".to_string())]
        );
        assert!(iocs(r"HKCU\ alone").is_empty());
    }

    #[test]
    fn wallets() {
        let v = iocs("pay 1BoatSLRHtKNngkdXEeobR76b53LETtpyT or bc1qar0srrr7xfkvy5l643lydnw9re59gtzzwf5mdq");
        assert_eq!(
            v,
            vec![
                (IocKind::WalletAddress, "1BoatSLRHtKNngkdXEeobR76b53LETtpyT".to_string()),
                (IocKind::WalletAddress, "bc1qar0srrr7xfkvy5l643lydnw9re59gtzzwf5mdq".to_string()),
            ]
        );
        // contains '0', which is outside the Base58 alphabet
        assert!(iocs("10000000000000000000000000000").is_empty());
    }

    #[test]
    fn file_paths() {
        assert_eq!(
            iocs(r"dropped to C:\Users\Public\upd.exe today"),
            vec![(IocKind::FilePath, r"C:\Users\Public\upd.exe".to_string())]
        );
    }

    #[test]
    fn utf16_offsets_are_byte_offsets() {
        let mut data = vec![0xFFu8, 0xFF];
        for c in "x http://a.b/c".bytes() {
            data.push(c);
            data.push(0);
        }
        let m = extract_iocs(&extract_strings(&data, 4));
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].offset, 2 + 2 * 2);
    }

    proptest! {
        #[test]
        fn every_finding_rematches_its_pattern(
            parts in proptest::collection::vec(prop_oneof![
                Just("http://evil.test/a.js".to_string()),
                Just("10.0.0.1".to_string()),
                Just(r"HKLM\Software\X".to_string()),
                Just("3J98t1WpEZ73CNmQviecrnyiWrnqRhWNLy".to_string()),
                Just(r"D:\a\b".to_string()),
                "[ -~]{0,24}",
            ], 0..8)
        ) {
            let text = parts.join(" ");
            for m in extract_iocs(&extract_strings(text.as_bytes(), 1)) {
                prop_assert!(m.kind.matches(&m.value), "{:?} {:?}", m.kind, m.value);
                prop_assert!(m.offset < text.len());
            }
        }
    }
}
