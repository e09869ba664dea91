//! ZIP writer with stored/deflate entries and traditional PKWARE encryption.
//!
//! The cipher here is written from the APPNOTE description with its own CRC
//! table, so tests can use it as an oracle for the reader's implementation.

use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// DOS date/time for 2024-03-15 10:30:00.
pub const FIXED_TIME: u16 = (10 << 11) | (30 << 5);
pub const FIXED_DATE: u16 = ((2024 - 1980) << 9) | (3 << 5) | 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Stored,
    Deflate,
}

impl Method {
    fn code(self) -> u16 {
        match self {
            Method::Stored => 0,
            Method::Deflate => 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ZipEntrySpec {
    pub name: String,
    pub data: Vec<u8>,
    pub method: Method,
    pub password: Option<String>,
}

impl ZipEntrySpec {
    pub fn new(name: impl Into<String>, data: impl Into<Vec<u8>>, method: Method) -> Self {
        Self {
            name: name.into(),
            data: data.into(),
            method,
            password: None,
        }
    }

    pub fn encrypted(mut self, password: impl Into<String>) -> Self {
        self.password = Some(password.into());
        self
    }
}

fn crc_table() -> [u32; 256] {
    let mut t = [0u32; 256];
    for (n, slot) in t.iter_mut().enumerate() {
        let mut c = n as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *slot = c;
    }
    t
}

/// The three-word key state of the traditional cipher.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CipherKeys {
    pub k0: u32,
    pub k1: u32,
    pub k2: u32,
    table: [u32; 256],
}

impl CipherKeys {
    pub fn from_password(password: &[u8]) -> Self {
        let mut k = CipherKeys {
            k0: 0x1234_5678,
            k1: 0x2345_6789,
            k2: 0x3456_7890,
            table: crc_table(),
        };
        for &b in password {
            k.update(b);
        }
        k
    }

    fn crc_byte(&self, crc: u32, b: u8) -> u32 {
        self.table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8)
    }

    fn update(&mut self, plain: u8) {
        self.k0 = self.crc_byte(self.k0, plain);
        self.k1 = self.k1.wrapping_add(self.k0 & 0xFF).wrapping_mul(134_775_813).wrapping_add(1);
        self.k2 = self.crc_byte(self.k2, (self.k1 >> 24) as u8);
    }

    fn stream_byte(&self) -> u8 {
        let t = (self.k2 | 2) as u16;
        (t.wrapping_mul(t ^ 1) >> 8) as u8
    }

    pub fn encrypt(&mut self, data: &[u8]) -> Vec<u8> {
        data.iter()
            .map(|&p| {
                let c = p ^ self.stream_byte();
                self.update(p);
                c
            })
            .collect()
    }

    pub fn decrypt(&mut self, data: &[u8]) -> Vec<u8> {
        data.iter()
            .map(|&c| {
                let p = c ^ self.stream_byte();
                self.update(p);
                p
            })
            .collect()
    }
}

pub fn deflate_raw(data: &[u8]) -> Vec<u8> {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
    enc.write_all(data).expect("in-memory write");
    enc.finish().expect("in-memory write")
}

pub fn crc32(data: &[u8]) -> u32 {
    crc32fast::hash(data)
}

fn push16(v: &mut Vec<u8>, n: u16) {
    v.extend_from_slice(&n.to_le_bytes());
}

fn push32(v: &mut Vec<u8>, n: u32) {
    v.extend_from_slice(&n.to_le_bytes());
}

/// Builds an archive. `seed` drives the random bytes of encryption headers.
pub fn build_zip(entries: &[ZipEntrySpec], comment: &str, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut central = Vec::new();
    for e in entries {
        let offset = out.len() as u32;
        let crc = crc32(&e.data);
        let mut body = match e.method {
            Method::Stored => e.data.clone(),
            Method::Deflate => deflate_raw(&e.data),
        };
        let flags: u16 = if e.password.is_some() { 1 } else { 0 };
        if let Some(pw) = &e.password {
            let mut header = [0u8; 12];
            rng.fill_bytes(&mut header[..11]);
            header[11] = (crc >> 24) as u8;
            let mut keys = CipherKeys::from_password(pw.as_bytes());
            let mut enc = keys.encrypt(&header);
            enc.extend(keys.encrypt(&body));
            body = enc;
        }
        let fields = |v: &mut Vec<u8>| {
            push16(v, 20);
            push16(v, flags);
            push16(v, e.method.code());
            push16(v, FIXED_TIME);
            push16(v, FIXED_DATE);
            push32(v, crc);
            push32(v, body.len() as u32);
            push32(v, e.data.len() as u32);
            push16(v, e.name.len() as u16);
            push16(v, 0);
        };

        push32(&mut out, 0x0403_4B50);
        fields(&mut out);
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&body);

        push32(&mut central, 0x0201_4B50);
        push16(&mut central, 20);
        fields(&mut central);
        push16(&mut central, 0); // comment
        push16(&mut central, 0); // disk
        push16(&mut central, 0); // internal attributes
        push32(&mut central, 0); // external attributes
        push32(&mut central, offset);
        central.extend_from_slice(e.name.as_bytes());
    }
    let cd_offset = out.len() as u32;
    out.extend_from_slice(&central);
    push32(&mut out, 0x0605_4B50);
    push16(&mut out, 0);
    push16(&mut out, 0);
    push16(&mut out, entries.len() as u16);
    push16(&mut out, entries.len() as u16);
    push32(&mut out, central.len() as u32);
    push32(&mut out, cd_offset);
    push16(&mut out, comment.len() as u16);
    out.extend_from_slice(comment.as_bytes());
    out
}
