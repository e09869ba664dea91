//! Data identifiers for the supported container and document formats.

pub mod eml;
pub mod pcap;
pub mod pe;
pub mod png;
pub mod script;
pub mod zip;

use std::sync::Arc;

use crate::engine::{ContentKind, Registry};

pub use eml::{parse_eml, EmailDocument, EmlError, EmlIdentifier};
pub use pcap::{parse_pcap, HttpExchange, PcapError, PcapIdentifier, PcapListing};
pub use pe::{parse_pe, PeError, PeIdentifier, PeSummary};
pub use png::{parse_png, PngError, PngIdentifier, PngSummary};
pub use script::ScriptIdentifier;
pub use zip::{extract_zip_entry, parse_zip, ZipEntry, ZipError, ZipIdentifier, ZipListing};

pub(crate) fn u16_at(data: &[u8], off: usize) -> Option<u16> {
    data.get(off..off.checked_add(2)?).map(|b| u16::from_le_bytes([b[0], b[1]]))
}

pub(crate) fn u32_at(data: &[u8], off: usize) -> Option<u32> {
    data.get(off..off.checked_add(4)?)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub(crate) fn u16_be(data: &[u8], off: usize) -> Option<u16> {
    data.get(off..off.checked_add(2)?).map(|b| u16::from_be_bytes([b[0], b[1]]))
}

pub(crate) fn u32_be(data: &[u8], off: usize) -> Option<u32> {
    data.get(off..off.checked_add(4)?)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Registry with every bundled identifier.
pub fn default_registry() -> Registry {
    let mut r = Registry::empty();
    let all: [(ContentKind, Arc<dyn crate::engine::DataIdentifier>); 6] = [
        (ContentKind::Eml, Arc::new(EmlIdentifier)),
        (ContentKind::Zip, Arc::new(ZipIdentifier)),
        (ContentKind::Pe, Arc::new(PeIdentifier)),
        (ContentKind::Pcap, Arc::new(PcapIdentifier)),
        (ContentKind::Png, Arc::new(PngIdentifier)),
        (ContentKind::ScriptText, Arc::new(ScriptIdentifier)),
    ];
    for (kind, ident) in all {
        r.register(kind, ident).expect("one identifier per kind");
    }
    r
}

pub const DOCUMENT_EXTENSIONS: [&str; 8] = ["pdf", "doc", "docx", "xls", "xlsx", "txt", "jpg", "png"];
pub const EXECUTABLE_EXTENSIONS: [&str; 6] = ["exe", "scr", "com", "bat", "js", "vbs"];

fn base_name(name: &str) -> &str {
    name.rsplit(['/', '\\']).next().unwrap_or(name)
}

/// `<base>.<doc-ext>.<exec-ext>`, case-insensitively.
pub fn has_double_extension(name: &str) -> bool {
    let lower = base_name(name).to_ascii_lowercase();
    let parts: Vec<&str> = lower.rsplitn(3, '.').collect();
    matches!(parts.as_slice(), [exec, doc, base]
        if !base.is_empty()
            && EXECUTABLE_EXTENSIONS.contains(exec)
            && DOCUMENT_EXTENSIONS.contains(doc))
}

fn has_document_extension(name: &str) -> bool {
    base_name(name)
        .to_ascii_lowercase()
        .split('.')
        .skip(1)
        .any(|ext| DOCUMENT_EXTENSIONS.contains(&ext))
}

/// Masquerading predicates for an artifact with this name and type.
pub fn detect_masquerade(name: &str, kind: ContentKind, has_icon: bool) -> Vec<&'static str> {
    let mut out = Vec::new();
    if has_double_extension(name) {
        out.push("HasDoubleExtension");
    }
    if kind == ContentKind::Pe && has_icon && has_document_extension(name) {
        out.push("IconMismatch");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masquerade_cases() {
        assert_eq!(
            detect_masquerade("Contracts.pdf.exe", ContentKind::Pe, true),
            vec!["HasDoubleExtension", "IconMismatch"]
        );
        assert!(detect_masquerade("report.pdf", ContentKind::GenericBinary, false).is_empty());
        assert!(detect_masquerade("tool.exe", ContentKind::Pe, true).is_empty());
        assert!(detect_masquerade(".pdf.exe", ContentKind::Pe, false).is_empty());
        assert_eq!(detect_masquerade("dir/INVOICE.DOCX.SCR", ContentKind::Pe, false), vec!["HasDoubleExtension"]);
    }

    #[test]
    fn registry_covers_specialized_kinds() {
        let r = default_registry();
        for kind in ContentKind::ALL {
            assert_eq!(r.is_registered(kind), kind != ContentKind::GenericBinary);
        }
    }

    #[test]
    fn readers_bounds() {
        assert_eq!(u16_at(&[1, 2], 0), Some(0x0201));
        assert_eq!(u16_at(&[1, 2], 1), None);
        assert_eq!(u32_be(&[0, 0, 1, 0], 0), Some(256));
        assert_eq!(u32_at(&[0; 4], usize::MAX), None);
    }
}
