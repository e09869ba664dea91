//! PE/COFF headers, section table, import names, top-level resource types and
//! overlay detection.

use serde::Serialize;

use super::{u16_at, u32_at};
use crate::engine::{
    detect_type, AnalysisResult, Arg, Confidence, ContentKind, DataIdentifier, IdentifyContext, IdentifyError,
    ViewKind, ViewerHint,
};

const PE32_MAGIC: u16 = 0x10B;
const PE32_PLUS_MAGIC: u16 = 0x20B;
const SECTION_HEADER: usize = 40;
const IMPORT_DESCRIPTOR: usize = 20;
const DIR_IMPORT: usize = 1;
const DIR_RESOURCE: usize = 2;
const RT_GROUP_ICON: u32 = 14;
const RT_VERSION: u32 = 16;
const MAX_DESCRIPTORS: usize = 4096;
const MAX_THUNKS: usize = 65_536;
const MAX_NAME: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PeError {
    #[error("missing MZ signature")]
    NotMz,
    #[error("e_lfanew {0:#x} points beyond the file")]
    BadLfanew(u32),
    #[error("missing PE signature")]
    BadSignature,
    #[error("unknown optional header magic {0:#x}")]
    BadOptionalMagic(u16),
    #[error("truncated {0}")]
    Truncated(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Section {
    pub name: String,
    pub virtual_address: u32,
    pub virtual_size: u32,
    pub raw_offset: u32,
    pub raw_size: u32,
}

impl Section {
    fn raw_end(&self) -> u64 {
        self.raw_offset as u64 + self.raw_size as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImportedDll {
    pub dll: String,
    pub functions: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PeSummary {
    pub machine: u16,
    pub is_64: bool,
    pub num_sections: u16,
    pub entry_point: u32,
    pub sections: Vec<Section>,
    pub imports: Vec<ImportedDll>,
    /// `(offset, length)` of bytes after the last section.
    pub overlay: Option<(u64, u64)>,
    pub has_version_info: bool,
    pub icon_group_present: bool,
    /// Sections whose raw range lies outside the file.
    pub out_of_bounds: Vec<String>,
    pub imports_truncated: bool,
}

struct Image<'a> {
    data: &'a [u8],
    sections: &'a [Section],
    size_of_headers: u32,
}

impl Image<'_> {
    fn offset(&self, rva: u32) -> Option<usize> {
        if rva < self.size_of_headers {
            return Some(rva as usize).filter(|&o| o < self.data.len());
        }
        self.sections.iter().find_map(|s| {
            let span = s.virtual_size.max(s.raw_size);
            let delta = rva.checked_sub(s.virtual_address)?;
            (delta < span && delta < s.raw_size)
                .then(|| s.raw_offset as usize + delta as usize)
                .filter(|&o| o < self.data.len())
        })
    }

    fn c_string(&self, rva: u32) -> Option<String> {
        let start = self.offset(rva)?;
        let tail = &self.data[start..self.data.len().min(start + MAX_NAME)];
        let len = tail.iter().position(|&b| b == 0)?;
        let s = &tail[..len];
        (!s.is_empty() && s.iter().all(|b| b.is_ascii_graphic())).then(|| String::from_utf8_lossy(s).into_owned())
    }
}

fn section_name(raw: &[u8]) -> String {
    let end = raw.iter().position(|&b| b == 0).unwrap_or(raw.len());
    String::from_utf8_lossy(&raw[..end]).into_owned()
}

pub fn parse_pe(data: &[u8]) -> Result<PeSummary, PeError> {
    if !data.starts_with(b"MZ") {
        return Err(PeError::NotMz);
    }
    let lfanew = u32_at(data, 0x3C).ok_or(PeError::Truncated("DOS header"))?;
    let pe = lfanew as usize;
    if pe.checked_add(24).is_none_or(|end| end > data.len()) {
        return Err(PeError::BadLfanew(lfanew));
    }
    if &data[pe..pe + 4] != b"PE\0\0" {
        return Err(PeError::BadSignature);
    }
    let coff = pe + 4;
    let machine = u16_at(data, coff).ok_or(PeError::Truncated("COFF header"))?;
    let num_sections = u16_at(data, coff + 2).ok_or(PeError::Truncated("COFF header"))?;
    let opt_size = u16_at(data, coff + 16).ok_or(PeError::Truncated("COFF header"))? as usize;
    let opt = coff + 20;
    let magic = u16_at(data, opt).ok_or(PeError::Truncated("optional header"))?;
    let is_64 = match magic {
        PE32_MAGIC => false,
        PE32_PLUS_MAGIC => true,
        other => return Err(PeError::BadOptionalMagic(other)),
    };
    let entry_point = u32_at(data, opt + 16).ok_or(PeError::Truncated("optional header"))?;
    let size_of_headers = u32_at(data, opt + 60).ok_or(PeError::Truncated("optional header"))?;
    let (count_at, dirs_at) = if is_64 { (opt + 108, opt + 112) } else { (opt + 92, opt + 96) };
    let dir_count = u32_at(data, count_at).unwrap_or(0) as usize;
    let directory = |i: usize| -> Option<(u32, u32)> {
        if i >= dir_count || dirs_at + 8 * i + 8 > opt + opt_size {
            return None;
        }
        let rva = u32_at(data, dirs_at + 8 * i)?;
        let size = u32_at(data, dirs_at + 8 * i + 4)?;
        (rva != 0).then_some((rva, size))
    };

    let table = opt + opt_size;
    let mut sections = Vec::with_capacity(num_sections as usize);
    for i in 0..num_sections as usize {
        let at = table + i * SECTION_HEADER;
        let raw = data.get(at..at + SECTION_HEADER).ok_or(PeError::Truncated("section table"))?;
        sections.push(Section {
            name: section_name(&raw[..8]),
            virtual_size: u32_at(raw, 8).expect("in bounds"),
            virtual_address: u32_at(raw, 12).expect("in bounds"),
            raw_size: u32_at(raw, 16).expect("in bounds"),
            raw_offset: u32_at(raw, 20).expect("in bounds"),
        });
    }

    let mut summary = PeSummary {
        machine,
        is_64,
        num_sections,
        entry_point,
        ..Default::default()
    };
    let len = data.len() as u64;
    summary.out_of_bounds = sections
        .iter()
        .filter(|s| s.raw_size > 0 && s.raw_end() > len)
        .map(|s| s.name.clone())
        .collect();
    let end = sections.iter().filter(|s| s.raw_size > 0).map(Section::raw_end).max();
    if let Some(end) = end {
        if end < len {
            summary.overlay = Some((end, len - end));
        }
    }

    let image = Image {
        data,
        sections: &sections,
        size_of_headers,
    };
    if let Some((rva, _)) = directory(DIR_IMPORT) {
        let (imports, truncated) = parse_imports(&image, rva, is_64);
        summary.imports = imports;
        summary.imports_truncated = truncated;
    }
    if let Some((rva, _)) = directory(DIR_RESOURCE) {
        let types = resource_types(&image, rva);
        summary.icon_group_present = types.contains(&RT_GROUP_ICON);
        summary.has_version_info = types.contains(&RT_VERSION);
    }
    summary.sections = sections;
    Ok(summary)
}

/// Returns the imports read and whether the walk stopped on malformed data.
fn parse_imports(image: &Image<'_>, rva: u32, is_64: bool) -> (Vec<ImportedDll>, bool) {
    let mut out = Vec::new();
    let Some(mut at) = image.offset(rva) else {
        return (out, true);
    };
    let thunk_size = if is_64 { 8 } else { 4 };
    for _ in 0..MAX_DESCRIPTORS {
        let Some(desc) = image.data.get(at..at + IMPORT_DESCRIPTOR) else {
            return (out, true);
        };
        if desc.iter().all(|&b| b == 0) {
            return (out, false);
        }
        at += IMPORT_DESCRIPTOR;
        let original = u32_at(desc, 0).expect("in bounds");
        let name_rva = u32_at(desc, 12).expect("in bounds");
        let first = u32_at(desc, 16).expect("in bounds");
        let Some(dll) = image.c_string(name_rva) else {
            return (out, true);
        };
        let thunks = if original != 0 { original } else { first };
        let Some(mut t) = image.offset(thunks) else {
            out.push(ImportedDll { dll, functions: Vec::new() });
            return (out, true);
        };
        let mut functions = Vec::new();
        let mut broken = true;
        for _ in 0..MAX_THUNKS {
            let value = if is_64 {
                image.data.get(t..t + 8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            } else {
                u32_at(image.data, t).map(u64::from)
            };
            let Some(value) = value else { break };
            if value == 0 {
                broken = false;
                break;
            }
            let ordinal_flag = if is_64 { 1u64 << 63 } else { 1u64 << 31 };
            if value & ordinal_flag != 0 {
                functions.push(format!("#{}", value & 0xFFFF));
            } else {
                match image.c_string((value as u32).wrapping_add(2)) {
                    Some(name) => functions.push(name),
                    None => break,
                }
            }
            t += thunk_size;
        }
        out.push(ImportedDll { dll, functions });
        if broken {
            return (out, true);
        }
    }
    (out, true)
}

/// Integer type ids at the root of the resource directory.
fn resource_types(image: &Image<'_>, rva: u32) -> Vec<u32> {
    let Some(root) = image.offset(rva) else {
        return Vec::new();
    };
    let (Some(named), Some(ids)) = (u16_at(image.data, root + 12), u16_at(image.data, root + 14)) else {
        return Vec::new();
    };
    let first_id = root + 16 + 8 * named as usize;
    (0..ids as usize)
        .map_while(|i| u32_at(image.data, first_id + 8 * i))
        .filter(|id| id & 0x8000_0000 == 0)
        .collect()
}

pub struct PeIdentifier;

impl DataIdentifier for PeIdentifier {
    fn name(&self) -> &'static str {
        "pe"
    }

    fn identify(&self, data: &[u8], _cx: &IdentifyContext<'_>) -> Result<AnalysisResult, IdentifyError> {
        let pe = parse_pe(data).map_err(|e| IdentifyError::Parse(e.to_string()))?;
        let mut r = AnalysisResult::default();
        r.viewer_hints.push(ViewerHint::new(ViewKind::Structured, "imports"));
        for dll in &pe.imports {
            for f in &dll.functions {
                r.fact("ImportsApi", vec![Arg::This, f.clone().into()]);
            }
        }
        if pe.imports_truncated {
            r.flag("ImportParseTruncated");
        }
        for name in &pe.out_of_bounds {
            r.fact("SectionOutOfBounds", vec![Arg::This, name.clone().into()]);
        }
        if pe.icon_group_present {
            r.flag("HasIconResource");
        }
        if pe.has_version_info {
            r.flag("HasVersionInfo");
        }
        if let Some((off, len)) = pe.overlay {
            r.flag("HasOverlay");
            r.viewer_hints.push(ViewerHint::region(ViewKind::Hex, off, len, "overlay"));
            let bytes = &data[off as usize..];
            if detect_type(bytes).confidence == Confidence::Magic {
                let kind = detect_type(bytes).kind;
                let ext = match kind {
                    ContentKind::Zip => ".zip",
                    ContentKind::Pe => ".exe",
                    ContentKind::Png => ".png",
                    ContentKind::Pcap => ".pcap",
                    _ => "",
                };
                r.child(format!("overlay@0x{off:x}{ext}"), bytes.to_vec(), format!("overlay:{off}"));
            }
        }
        Ok(r)
    }

    fn structured(&self, data: &[u8]) -> Result<serde_json::Value, IdentifyError> {
        let pe = parse_pe(data).map_err(|e| IdentifyError::Parse(e.to_string()))?;
        serde_json::to_value(pe).map_err(|e| IdentifyError::Parse(e.to_string()))
    }
}
