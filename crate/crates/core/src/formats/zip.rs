//! ZIP reader: EOCD scan, central directory, local header cross-check and
//! traditional PKWARE encryption.

use serde::Serialize;

use super::{u16_at, u32_at};
use crate::engine::{
    AnalysisResult, Arg, DataIdentifier, IdentifyContext, IdentifyError, ScanScope, ViewKind, ViewerHint,
};

const EOCD_SIG: u32 = 0x0605_4b50;
const CENTRAL_SIG: u32 = 0x0201_4b50;
const LOCAL_SIG: u32 = 0x0403_4b50;
const EOCD_LEN: usize = 22;
const CENTRAL_LEN: usize = 46;
const LOCAL_LEN: usize = 30;
const ENCRYPTION_HEADER: usize = 12;
const METHOD_STORED: u16 = 0;
const METHOD_DEFLATE: u16 = 8;
const METHOD_AES: u16 = 99;
const FLAG_ENCRYPTED: u16 = 1;
const FLAG_DATA_DESCRIPTOR: u16 = 1 << 3;
const FLAG_STRONG_ENCRYPTION: u16 = 1 << 6;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ZipError {
    #[error("end of central directory record not found")]
    MissingEocd,
    #[error("malformed archive: {0}")]
    Malformed(String),
    #[error("password check byte mismatch")]
    WrongPassword,
    #[error("entry {0:?} is encrypted and no password was given")]
    PasswordRequired(String),
    #[error("CRC-32 mismatch: expected {expected:08x}, got {actual:08x}")]
    Corruption { expected: u32, actual: u32 },
    #[error("unsupported encryption (method {0})")]
    UnsupportedEncryption(u16),
    #[error("unsupported compression method {0}")]
    UnsupportedMethod(u16),
    #[error("deflate stream error: {0}")]
    Inflate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Compression {
    Stored,
    Deflate,
    Unsupported(u16),
}

impl Compression {
    fn from_method(m: u16) -> Self {
        match m {
            METHOD_STORED => Compression::Stored,
            METHOD_DEFLATE => Compression::Deflate,
            other => Compression::Unsupported(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ZipEntry {
    pub path: String,
    pub compression: Compression,
    pub is_encrypted: bool,
    pub crc32: u32,
    /// Bytes on disk, including the 12-byte encryption header if any.
    pub compressed_size: u64,
    pub uncompressed_size: u64,
    /// Start of the entry data, just after the local header.
    pub data_offset: u64,
    #[serde(skip)]
    flags: u16,
    #[serde(skip)]
    mod_time: u16,
}

impl ZipEntry {
    /// Check byte expected at the end of the decrypted encryption header.
    fn check_byte(&self) -> u8 {
        if self.flags & FLAG_DATA_DESCRIPTOR != 0 {
            (self.mod_time >> 8) as u8
        } else {
            (self.crc32 >> 24) as u8
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ZipListing {
    pub entries: Vec<ZipEntry>,
    /// Paths whose local header disagrees with the central directory.
    pub mismatches: Vec<String>,
    pub comment: String,
    pub eocd_offset: u64,
}

impl ZipListing {
    pub fn any_encrypted(&self) -> bool {
        self.entries.iter().any(|e| e.is_encrypted)
    }
}

fn find_eocd(data: &[u8]) -> Option<usize> {
    if data.len() < EOCD_LEN {
        return None;
    }
    let last = data.len() - EOCD_LEN;
    let first = last.saturating_sub(u16::MAX as usize);
    (first..=last).rev().find(|&i| {
        u32_at(data, i) == Some(EOCD_SIG)
            && u16_at(data, i + 20).is_some_and(|len| i + EOCD_LEN + len as usize == data.len())
    })
}

fn truncated(what: &str) -> ZipError {
    ZipError::Malformed(format!("truncated {what}"))
}

/// Reads the central directory and validates each local header against it.
pub fn parse_zip(data: &[u8]) -> Result<ZipListing, ZipError> {
    let eocd = find_eocd(data).ok_or(ZipError::MissingEocd)?;
    let count = u16_at(data, eocd + 10).ok_or_else(|| truncated("EOCD"))? as usize;
    let cd_size = u32_at(data, eocd + 12).ok_or_else(|| truncated("EOCD"))? as usize;
    let cd_offset = u32_at(data, eocd + 16).ok_or_else(|| truncated("EOCD"))? as usize;
    let comment_len = u16_at(data, eocd + 20).unwrap_or(0) as usize;
    let comment = String::from_utf8_lossy(&data[eocd + EOCD_LEN..eocd + EOCD_LEN + comment_len]).into_owned();
    if cd_offset.checked_add(cd_size).is_none_or(|end| end > eocd) {
        return Err(ZipError::Malformed(format!(
            "central directory at {cd_offset} (+{cd_size}) overlaps the EOCD at {eocd}"
        )));
    }

    let mut listing = ZipListing {
        comment,
        eocd_offset: eocd as u64,
        ..Default::default()
    };
    let mut pos = cd_offset;
    for _ in 0..count {
        if u32_at(data, pos) != Some(CENTRAL_SIG) {
            return Err(ZipError::Malformed(format!("bad central directory signature at {pos}")));
        }
        let field16 = |off: usize| u16_at(data, pos + off).ok_or_else(|| truncated("central header"));
        let field32 = |off: usize| u32_at(data, pos + off).ok_or_else(|| truncated("central header"));
        let flags = field16(8)?;
        let method = field16(10)?;
        let mod_time = field16(12)?;
        let crc32 = field32(16)?;
        let compressed_size = field32(20)? as u64;
        let uncompressed_size = field32(24)? as u64;
        let name_len = field16(28)? as usize;
        let extra_len = field16(30)? as usize;
        let comment_len = field16(32)? as usize;
        let local_offset = field32(42)? as usize;
        let name_bytes = data
            .get(pos + CENTRAL_LEN..pos + CENTRAL_LEN + name_len)
            .ok_or_else(|| truncated("file name"))?;
        let path = String::from_utf8_lossy(name_bytes).into_owned();
        pos += CENTRAL_LEN + name_len + extra_len + comment_len;

        let local_ok = u32_at(data, local_offset) == Some(LOCAL_SIG)
            && u16_at(data, local_offset + 8) == Some(method)
            && u16_at(data, local_offset + 6).map(|f| f & FLAG_ENCRYPTED) == Some(flags & FLAG_ENCRYPTED)
            && data.get(local_offset + LOCAL_LEN..local_offset + LOCAL_LEN + name_len) == Some(name_bytes);
        if !local_ok {
            listing.mismatches.push(path);
            continue;
        }
        let local_extra = u16_at(data, local_offset + 28).unwrap_or(0) as usize;
        let data_offset = (local_offset + LOCAL_LEN + name_len + local_extra) as u64;
        if data_offset + compressed_size > data.len() as u64 {
            listing.mismatches.push(path);
            continue;
        }
        listing.entries.push(ZipEntry {
            path,
            compression: Compression::from_method(method),
            is_encrypted: flags & FLAG_ENCRYPTED != 0,
            crc32,
            compressed_size,
            uncompressed_size,
            data_offset,
            flags,
            mod_time,
        });
    }
    Ok(listing)
}

/// Returns the decrypted, decompressed and CRC-checked bytes of `entry`.
pub fn extract_zip_entry(data: &[u8], entry: &ZipEntry, password: Option<&str>) -> Result<Vec<u8>, ZipError> {
    if let Compression::Unsupported(METHOD_AES) = entry.compression {
        return Err(ZipError::UnsupportedEncryption(METHOD_AES));
    }
    if entry.is_encrypted && entry.flags & FLAG_STRONG_ENCRYPTION != 0 {
        return Err(ZipError::UnsupportedEncryption(entry.flags));
    }
    let start = entry.data_offset as usize;
    let end = start + entry.compressed_size as usize;
    let raw = data.get(start..end).ok_or_else(|| truncated("entry data"))?;

    let body = if entry.is_encrypted {
        let password = password.ok_or_else(|| ZipError::PasswordRequired(entry.path.clone()))?;
        if raw.len() < ENCRYPTION_HEADER {
            return Err(truncated("encryption header"));
        }
        let mut keys = ZipCryptoKeys::new(password.as_bytes());
        let mut plain = raw.to_vec();
        keys.decrypt(&mut plain);
        if plain[ENCRYPTION_HEADER - 1] != entry.check_byte() {
            return Err(ZipError::WrongPassword);
        }
        plain.split_off(ENCRYPTION_HEADER)
    } else {
        raw.to_vec()
    };

    let out = match entry.compression {
        Compression::Stored => body,
        Compression::Deflate => miniz_oxide::inflate::decompress_to_vec(&body)
            .map_err(|e| ZipError::Inflate(format!("{:?}", e.status)))?,
        Compression::Unsupported(m) => return Err(ZipError::UnsupportedMethod(m)),
    };
    let actual = crc32(&out);
    if actual != entry.crc32 {
        return Err(ZipError::Corruption {
            expected: entry.crc32,
            actual,
        });
    }
    Ok(out)
}

// ---- traditional PKWARE encryption ------------------------------------------

const CRC_TABLE: [u32; 256] = {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
};

fn crc_update(crc: u32, b: u8) -> u32 {
    CRC_TABLE[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8)
}

pub fn crc32(data: &[u8]) -> u32 {
    !data.iter().fold(0xFFFF_FFFF, |c, &b| crc_update(c, b))
}

/// The three rolling keys of the traditional cipher.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZipCryptoKeys(pub [u32; 3]);

impl ZipCryptoKeys {
    pub const INITIAL: [u32; 3] = [0x1234_5678, 0x2345_6789, 0x3456_7890];

    pub fn new(password: &[u8]) -> Self {
        let mut k = Self(Self::INITIAL);
        for &b in password {
            k.update(b);
        }
        k
    }

    fn update(&mut self, b: u8) {
        let [k0, k1, k2] = &mut self.0;
        *k0 = crc_update(*k0, b);
        *k1 = k1.wrapping_add(*k0 & 0xFF).wrapping_mul(134_775_813).wrapping_add(1);
        *k2 = crc_update(*k2, (*k1 >> 24) as u8);
    }

    fn stream_byte(&self) -> u8 {
        let t = (self.0[2] | 2) as u16;
        (t.wrapping_mul(t ^ 1) >> 8) as u8
    }

    pub fn decrypt(&mut self, buf: &mut [u8]) {
        for b in buf {
            let p = *b ^ self.stream_byte();
            self.update(p);
            *b = p;
        }
    }

    pub fn encrypt(&mut self, buf: &mut [u8]) {
        for b in buf {
            let c = *b ^ self.stream_byte();
            self.update(*b);
            *b = c;
        }
    }
}

// ---- identifier ----------------------------------------------------------------

pub struct ZipIdentifier;

impl DataIdentifier for ZipIdentifier {
    fn name(&self) -> &'static str {
        "zip"
    }

    fn identify(&self, data: &[u8], cx: &IdentifyContext<'_>) -> Result<AnalysisResult, IdentifyError> {
        let listing = parse_zip(data).map_err(|e| IdentifyError::Parse(e.to_string()))?;
        let mut r = AnalysisResult {
            scan: ScanScope::Skip,
            ..Default::default()
        };
        if listing.any_encrypted() {
            r.flag("IsEncrypted");
        }
        r.viewer_hints.push(ViewerHint::new(ViewKind::Table, "entries"));
        for path in &listing.mismatches {
            r.fact("HeaderMismatch", vec![Arg::This, path.clone().into()]);
        }
        for entry in &listing.entries {
            r.fact("ArchiveEntry", vec![Arg::This, entry.path.clone().into()]);
            if entry.path.ends_with('/') {
                continue;
            }
            let extracted = if entry.is_encrypted {
                cx.passwords.iter().find_map(|pw| {
                    extract_zip_entry(data, entry, Some(pw)).ok().map(|bytes| (bytes, Some(pw)))
                })
            } else {
                match extract_zip_entry(data, entry, None) {
                    Ok(bytes) => Some((bytes, None)),
                    Err(e) => {
                        r.fact("EntryExtractFailed", vec![Arg::This, entry.path.clone().into()]);
                        log::debug!("{}: {e}", entry.path);
                        None
                    }
                }
            };
            if let Some((bytes, pw)) = extracted {
                if let Some(pw) = pw {
                    r.fact("ArchiveDecrypted", vec![Arg::This, pw.clone().into()]);
                }
                let name = entry.path.rsplit('/').next().unwrap_or(&entry.path).to_string();
                r.child(name, bytes, entry.path.clone());
            }
        }
        Ok(r)
    }

    fn structured(&self, data: &[u8]) -> Result<serde_json::Value, IdentifyError> {
        let listing = parse_zip(data).map_err(|e| IdentifyError::Parse(e.to_string()))?;
        serde_json::to_value(listing).map_err(|e| IdentifyError::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stored_zip(name: &str, body: &[u8]) -> Vec<u8> {
        let crc = crc32(body);
        let mut out = Vec::new();
        out.extend_from_slice(&LOCAL_SIG.to_le_bytes());
        out.extend_from_slice(&[20, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(body);
        let cd = out.len();
        out.extend_from_slice(&CENTRAL_SIG.to_le_bytes());
        out.extend_from_slice(&[20, 0, 20, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(&[0; 12]);
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let cd_len = out.len() - cd;
        out.extend_from_slice(&EOCD_SIG.to_le_bytes());
        out.extend_from_slice(&[0, 0, 0, 0, 1, 0, 1, 0]);
        out.extend_from_slice(&(cd_len as u32).to_le_bytes());
        out.extend_from_slice(&(cd as u32).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out
    }

    #[test]
    fn crc_reference_values() {
        assert_eq!(crc32(b""), 0);
        assert_eq!(crc32(b"hi"), 0xd893_2aac);
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn key_schedule_after_infected() {
        assert_eq!(ZipCryptoKeys::new(b"infected").0, [0x0917_ED61, 0xCFC8_F696, 0x5D3E_9072]);
    }

    #[test]
    fn cipher_round_trip() {
        let mut buf = b"attack at dawn".to_vec();
        ZipCryptoKeys::new(b"pw").encrypt(&mut buf);
        assert_ne!(buf, b"attack at dawn");
        ZipCryptoKeys::new(b"pw").decrypt(&mut buf);
        assert_eq!(buf, b"attack at dawn");
    }

    #[test]
    fn empty_archive() {
        let mut eocd = EOCD_SIG.to_le_bytes().to_vec();
        eocd.resize(EOCD_LEN, 0);
        assert!(parse_zip(&eocd).unwrap().entries.is_empty());
    }

    #[test]
    fn stored_entry() {
        let z = stored_zip("hi.txt", b"hi");
        let listing = parse_zip(&z).unwrap();
        assert_eq!(listing.entries.len(), 1);
        let e = &listing.entries[0];
        assert_eq!((e.path.as_str(), e.compressed_size, e.crc32), ("hi.txt", 2, 0xd893_2aac));
        assert_eq!(extract_zip_entry(&z, e, None).unwrap(), b"hi");
    }

    #[test]
    fn corrupt_payload_fails_crc() {
        let mut z = stored_zip("hi.txt", b"hi");
        let listing = parse_zip(&z).unwrap();
        z[listing.entries[0].data_offset as usize] = b'H';
        assert!(matches!(
            extract_zip_entry(&z, &listing.entries[0], None),
            Err(ZipError::Corruption { .. })
        ));
    }

    #[test]
    fn missing_eocd() {
        let z = stored_zip("a", b"abc");
        assert_eq!(parse_zip(&z[..z.len() - 22]), Err(ZipError::MissingEocd));
    }

    #[test]
    fn local_header_mismatch_skips_entry() {
        let mut z = stored_zip("a.txt", b"abc");
        z[30] = b'b';
        let listing = parse_zip(&z).unwrap();
        assert!(listing.entries.is_empty());
        assert_eq!(listing.mismatches, vec!["a.txt".to_string()]);
    }
}
