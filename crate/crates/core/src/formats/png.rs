//! PNG chunk walk: signature, CRC checks and `tEXt` chunks.

use serde::Serialize;

use super::u32_be;
use super::zip::crc32;
use crate::engine::{AnalysisResult, Arg, DataIdentifier, IdentifyContext, IdentifyError, ScanScope, ViewKind, ViewerHint};

const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PngError {
    #[error("missing PNG signature")]
    BadSignature,
    #[error("chunk at offset {0} runs past the end of the file")]
    TruncatedChunk(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Chunk {
    pub kind: String,
    pub offset: usize,
    pub length: usize,
    pub crc_ok: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PngSummary {
    pub chunks: Vec<Chunk>,
    /// `(keyword, text)` pairs from `tEXt` chunks.
    pub text: Vec<(String, String)>,
    pub has_end: bool,
}

pub fn parse_png(data: &[u8]) -> Result<PngSummary, PngError> {
    if !data.starts_with(&SIGNATURE) {
        return Err(PngError::BadSignature);
    }
    let mut s = PngSummary::default();
    let mut pos = SIGNATURE.len();
    while pos < data.len() {
        let len = u32_be(data, pos).ok_or(PngError::TruncatedChunk(pos))? as usize;
        let end = pos
            .checked_add(12)
            .and_then(|n| n.checked_add(len))
            .filter(|&e| e <= data.len())
            .ok_or(PngError::TruncatedChunk(pos))?;
        let kind = &data[pos + 4..pos + 8];
        let body = &data[pos + 8..pos + 8 + len];
        let stored = u32_be(data, pos + 8 + len).expect("in bounds");
        let crc_ok = crc32(&data[pos + 4..pos + 8 + len]) == stored;
        let kind_name = String::from_utf8_lossy(kind).into_owned();
        if kind == b"tEXt" {
            if let Some(nul) = body.iter().position(|&b| b == 0) {
                s.text.push((
                    String::from_utf8_lossy(&body[..nul]).into_owned(),
                    body[nul + 1..].iter().map(|&b| b as char).collect(),
                ));
            }
        }
        s.chunks.push(Chunk {
            kind: kind_name,
            offset: pos,
            length: len,
            crc_ok,
        });
        pos = end;
        if kind == b"IEND" {
            s.has_end = true;
            break;
        }
    }
    Ok(s)
}

pub struct PngIdentifier;

impl DataIdentifier for PngIdentifier {
    fn name(&self) -> &'static str {
        "png"
    }

    fn identify(&self, data: &[u8], _cx: &IdentifyContext<'_>) -> Result<AnalysisResult, IdentifyError> {
        let png = parse_png(data).map_err(|e| IdentifyError::Parse(e.to_string()))?;
        let mut r = AnalysisResult {
            scan: ScanScope::Skip,
            ..Default::default()
        };
        r.viewer_hints.push(ViewerHint::new(ViewKind::Table, "chunks"));
        if !png.text.is_empty() {
            r.flag("ContainsText");
        }
        for c in png.chunks.iter().filter(|c| !c.crc_ok) {
            r.fact("ChunkCrcMismatch", vec![Arg::This, c.kind.clone().into()]);
        }
        Ok(r)
    }

    fn structured(&self, data: &[u8]) -> Result<serde_json::Value, IdentifyError> {
        let png = parse_png(data).map_err(|e| IdentifyError::Parse(e.to_string()))?;
        serde_json::to_value(png).map_err(|e| IdentifyError::Parse(e.to_string()))
    }
}
