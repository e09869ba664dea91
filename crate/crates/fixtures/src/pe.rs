//! Minimal but well-formed PE32+ images: `.text`, `.rdata` with an import
//! table and extra strings, optional `.rsrc` with an icon group, optional
//! overlay.

const FILE_ALIGN: usize = 0x200;
const SECTION_ALIGN: u32 = 0x1000;
const HEADERS: usize = 0x200;
const LFANEW: usize = 0x80;
const OPT_SIZE: usize = 240;

#[derive(Debug, Clone, Default)]
pub struct PeSpec {
    /// `(dll, functions)` in table order.
    pub imports: Vec<(String, Vec<String>)>,
    pub icon: bool,
    /// NUL-terminated ASCII strings placed in `.rdata`.
    pub strings: Vec<String>,
    pub overlay: Option<Vec<u8>>,
}

impl PeSpec {
    pub fn import(mut self, dll: &str, functions: &[&str]) -> Self {
        self.imports
            .push((dll.to_string(), functions.iter().map(|f| f.to_string()).collect()));
        self
    }
}

struct SectionOut {
    name: &'static [u8],
    rva: u32,
    data: Vec<u8>,
    characteristics: u32,
}

fn align(n: usize, a: usize) -> usize {
    n.div_ceil(a) * a
}

fn put16(buf: &mut [u8], at: usize, v: u16) {
    buf[at..at + 2].copy_from_slice(&v.to_le_bytes());
}

fn put32(buf: &mut [u8], at: usize, v: u32) {
    buf[at..at + 4].copy_from_slice(&v.to_le_bytes());
}

fn put64(buf: &mut [u8], at: usize, v: u64) {
    buf[at..at + 8].copy_from_slice(&v.to_le_bytes());
}

/// `.rdata` contents for a section at `base`; returns (bytes, import dir, IAT dir).
fn rdata(spec: &PeSpec, base: u32) -> (Vec<u8>, (u32, u32), (u32, u32)) {
    let n = spec.imports.len();
    let desc_size = if n == 0 { 0 } else { (n + 1) * 20 };
    let thunk_bytes: usize = spec.imports.iter().map(|(_, f)| (f.len() + 1) * 8).sum();
    let ilt_at = desc_size;
    let iat_at = ilt_at + thunk_bytes;
    let mut names_at = iat_at + thunk_bytes;

    let mut hint_names: Vec<Vec<u32>> = Vec::new();
    let mut blob = Vec::new();
    for (_, funcs) in &spec.imports {
        let mut rvas = Vec::new();
        for f in funcs {
            rvas.push(base + (names_at + blob.len()) as u32);
            blob.extend_from_slice(&0u16.to_le_bytes());
            blob.extend_from_slice(f.as_bytes());
            blob.push(0);
            if blob.len() % 2 == 1 {
                blob.push(0);
            }
        }
        hint_names.push(rvas);
    }
    let mut dll_names = Vec::new();
    for (dll, _) in &spec.imports {
        dll_names.push(base + (names_at + blob.len()) as u32);
        blob.extend_from_slice(dll.as_bytes());
        blob.push(0);
    }
    names_at += blob.len();

    let mut out = vec![0u8; names_at];
    out[iat_at + thunk_bytes..].copy_from_slice(&blob);
    let mut ilt = ilt_at;
    let mut iat = iat_at;
    for (i, rvas) in hint_names.iter().enumerate() {
        let d = i * 20;
        put32(&mut out, d, base + ilt as u32);
        put32(&mut out, d + 12, dll_names[i]);
        put32(&mut out, d + 16, base + iat as u32);
        for &r in rvas {
            put64(&mut out, ilt, r as u64);
            put64(&mut out, iat, r as u64);
            ilt += 8;
            iat += 8;
        }
        ilt += 8;
        iat += 8;
    }
    for s in &spec.strings {
        out.extend_from_slice(s.as_bytes());
        out.push(0);
    }
    let import_dir = if n == 0 { (0, 0) } else { (base, desc_size as u32) };
    let iat_dir = if n == 0 { (0, 0) } else { (base + iat_at as u32, thunk_bytes as u32) };
    (out, import_dir, iat_dir)
}

/// Resource tree with one RT_ICON and one RT_GROUP_ICON leaf.
fn rsrc(base: u32) -> Vec<u8> {
    const DIR: usize = 16;
    const ENTRY: usize = 8;
    let dir_with_one = DIR + ENTRY;
    // root(2 entries), then per type: name dir, lang dir; then 2 data entries, then data
    let root_size = DIR + 2 * ENTRY;
    let type_dirs = [root_size, root_size + 2 * dir_with_one];
    let data_entries = root_size + 4 * dir_with_one;
    let data_at = data_entries + 2 * 16;
    let icon: Vec<u8> = {
        let mut b = vec![0u8; 40];
        put32(&mut b, 0, 40);
        put32(&mut b, 4, 16);
        put32(&mut b, 8, 32);
        put16(&mut b, 12, 1);
        put16(&mut b, 14, 32);
        b
    };
    let group: Vec<u8> = {
        let mut b = vec![0u8; 20];
        put16(&mut b, 2, 1);
        put16(&mut b, 4, 1);
        b[6] = 16;
        b[7] = 16;
        put16(&mut b, 10, 1);
        put16(&mut b, 12, 32);
        put32(&mut b, 14, icon.len() as u32);
        put16(&mut b, 18, 1);
        b
    };
    let mut out = vec![0u8; data_at];
    let dir_header = |out: &mut Vec<u8>, at: usize, ids: u16| put16(out, at + 14, ids);
    dir_header(&mut out, 0, 2);
    for (i, (ty, dir)) in [(3u32, type_dirs[0]), (14u32, type_dirs[1])].into_iter().enumerate() {
        let e = DIR + i * ENTRY;
        put32(&mut out, e, ty);
        put32(&mut out, e + 4, 0x8000_0000 | dir as u32);
        let lang = dir + dir_with_one;
        dir_header(&mut out, dir, 1);
        put32(&mut out, dir + DIR, 1);
        put32(&mut out, dir + DIR + 4, 0x8000_0000 | lang as u32);
        dir_header(&mut out, lang, 1);
        put32(&mut out, lang + DIR, 0x409);
        put32(&mut out, lang + DIR + 4, (data_entries + i * 16) as u32);
    }
    let icon_at = data_at;
    let group_at = align(icon_at + icon.len(), 4);
    for (i, (at, len)) in [(icon_at, icon.len()), (group_at, group.len())].into_iter().enumerate() {
        let d = data_entries + i * 16;
        put32(&mut out, d, base + at as u32);
        put32(&mut out, d + 4, len as u32);
    }
    out.resize(group_at, 0);
    out[icon_at..icon_at + icon.len()].copy_from_slice(&icon);
    out.extend_from_slice(&group);
    out
}

pub fn build_pe(spec: &PeSpec) -> Vec<u8> {
    let text: Vec<u8> = vec![
        0x48, 0x83, 0xEC, 0x28, // sub rsp, 40
        0x31, 0xC9, // xor ecx, ecx
        0x48, 0x83, 0xC4, 0x28, // add rsp, 40
        0xC3, // ret
    ];
    let mut sections = vec![SectionOut {
        name: b".text",
        rva: SECTION_ALIGN,
        data: text,
        characteristics: 0x6000_0020,
    }];
    let rdata_rva = 2 * SECTION_ALIGN;
    let (rdata_bytes, import_dir, iat_dir) = rdata(spec, rdata_rva);
    let rdata_span = align(rdata_bytes.len().max(1), SECTION_ALIGN as usize) as u32;
    sections.push(SectionOut {
        name: b".rdata",
        rva: rdata_rva,
        data: rdata_bytes,
        characteristics: 0x4000_0040,
    });
    let mut resource_dir = (0, 0);
    if spec.icon {
        let rva = rdata_rva + rdata_span;
        let data = rsrc(rva);
        resource_dir = (rva, data.len() as u32);
        sections.push(SectionOut {
            name: b".rsrc",
            rva,
            data,
            characteristics: 0x4000_0040,
        });
    }

    let mut out = vec![0u8; HEADERS];
    out[..2].copy_from_slice(b"MZ");
    put16(&mut out, 2, 0x90);
    put16(&mut out, 4, 3);
    put16(&mut out, 8, 4);
    put16(&mut out, 0x18, 0x40);
    put32(&mut out, 0x3C, LFANEW as u32);
    let stub = b"This program cannot be run in DOS mode.\r\r\n$";
    out[0x4E..0x4E + stub.len()].copy_from_slice(stub);
    out[LFANEW..LFANEW + 4].copy_from_slice(b"PE\0\0");
    let coff = LFANEW + 4;
    put16(&mut out, coff, 0x8664);
    put16(&mut out, coff + 2, sections.len() as u16);
    put32(&mut out, coff + 4, 0x65F4_2A00);
    put16(&mut out, coff + 16, OPT_SIZE as u16);
    put16(&mut out, coff + 18, 0x0022);
    let opt = coff + 20;
    let last = sections.last().expect("at least one section");
    let image_size = last.rva + align(last.data.len().max(1), SECTION_ALIGN as usize) as u32;
    put16(&mut out, opt, 0x20B);
    out[opt + 2] = 14;
    put32(&mut out, opt + 4, FILE_ALIGN as u32);
    put32(&mut out, opt + 16, SECTION_ALIGN);
    put32(&mut out, opt + 20, SECTION_ALIGN);
    put64(&mut out, opt + 24, 0x1_4000_0000);
    put32(&mut out, opt + 32, SECTION_ALIGN);
    put32(&mut out, opt + 36, FILE_ALIGN as u32);
    put16(&mut out, opt + 40, 6);
    put16(&mut out, opt + 48, 6);
    put32(&mut out, opt + 56, image_size);
    put32(&mut out, opt + 60, HEADERS as u32);
    put16(&mut out, opt + 68, 2);
    put16(&mut out, opt + 70, 0x8160);
    put64(&mut out, opt + 72, 0x10_0000);
    put64(&mut out, opt + 80, 0x1000);
    put64(&mut out, opt + 88, 0x10_0000);
    put64(&mut out, opt + 96, 0x1000);
    put32(&mut out, opt + 108, 16);
    let dirs = opt + 112;
    for (i, (rva, size)) in [(1, import_dir), (2, resource_dir), (12, iat_dir)] {
        put32(&mut out, dirs + 8 * i, rva);
        put32(&mut out, dirs + 8 * i + 4, size);
    }

    let table = opt + OPT_SIZE;
    let mut raw_offset = HEADERS;
    for (i, s) in sections.iter().enumerate() {
        let h = table + i * 40;
        out[h..h + s.name.len()].copy_from_slice(s.name);
        let raw_size = align(s.data.len().max(1), FILE_ALIGN);
        put32(&mut out, h + 8, s.data.len() as u32);
        put32(&mut out, h + 12, s.rva);
        put32(&mut out, h + 16, raw_size as u32);
        put32(&mut out, h + 20, raw_offset as u32);
        put32(&mut out, h + 36, s.characteristics);
        raw_offset += raw_size;
    }
    for s in &sections {
        let start = out.len();
        out.extend_from_slice(&s.data);
        out.resize(start + align(s.data.len().max(1), FILE_ALIGN), 0);
    }
    if let Some(overlay) = &spec.overlay {
        out.extend_from_slice(overlay);
    }
    out
}

/// File offset where the overlay starts for `spec`.
pub fn overlay_offset(spec: &PeSpec) -> usize {
    let without = PeSpec {
        overlay: None,
        ..spec.clone()
    };
    build_pe(&without).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape() {
        let spec = PeSpec::default().import("KERNEL32.dll", &["ExitProcess"]);
        let pe = build_pe(&spec);
        assert_eq!(&pe[..2], b"MZ");
        assert_eq!(&pe[0x80..0x84], b"PE\0\0");
        assert_eq!(pe.len() % FILE_ALIGN, 0);
        assert!(pe.windows(11).any(|w| w == b"ExitProcess"));
    }

    #[test]
    fn overlay_is_appended() {
        let spec = PeSpec {
            overlay: Some(b"PK\x05\x06tail".to_vec()),
            ..Default::default()
        };
        let pe = build_pe(&spec);
        assert_eq!(&pe[overlay_offset(&spec)..], b"PK\x05\x06tail");
    }
}
