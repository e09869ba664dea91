use serde::{Deserialize, Serialize};

use super::artifact::{ArtifactId, ContentType};
use crate::text::{is_printable_ascii, EntropyProfile, ExtractedString};

pub const HEX_ROW: usize = 16;
/// Bytes returned by a hex view when no length is given.
pub const DEFAULT_HEX_WINDOW: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HexRow {
    pub offset: u64,
    pub hex: String,
    pub ascii: String,
    /// `offset  hex  |ascii|`, as printed by the CLI.
    pub line: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HexView {
    pub artifact: ArtifactId,
    pub offset: u64,
    pub length: u64,
    pub total: u64,
    pub rows: Vec<HexRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StringsView {
    pub artifact: ArtifactId,
    pub min_length: usize,
    pub strings: Vec<ExtractedString>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredView {
    pub artifact: ArtifactId,
    pub content_type: ContentType,
    pub identifier: String,
    pub summary: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyView {
    pub artifact: ArtifactId,
    pub threshold: f64,
    pub profile: EntropyProfile,
    pub high_regions: Vec<usize>,
}

/// Formats `data` (which starts at `base`) as 16-byte rows.
pub fn hex_rows(data: &[u8], base: u64) -> Vec<HexRow> {
    data.chunks(HEX_ROW)
        .enumerate()
        .map(|(i, chunk)| {
            let offset = base + (i * HEX_ROW) as u64;
            let hex = chunk.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" ");
            let ascii: String = chunk
                .iter()
                .map(|&b| if is_printable_ascii(b) { b as char } else { '.' })
                .collect();
            let line = format!("{offset:08x}  {hex:<47}  |{ascii}|");
            HexRow { offset, hex, ascii, line }
        })
        .collect()
}
