use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

pub fn chunk(kind: &[u8; 4], body: &[u8]) -> Vec<u8> {
    let mut c = (body.len() as u32).to_be_bytes().to_vec();
    c.extend_from_slice(kind);
    c.extend_from_slice(body);
    let crc = crc32fast::hash(&c[4..]);
    c.extend_from_slice(&crc.to_be_bytes());
    c
}

/// A 1x1 grayscale image with the given `tEXt` pairs.
pub fn build_png(text: &[(&str, &str)]) -> Vec<u8> {
    let mut out = SIGNATURE.to_vec();
    let mut ihdr = Vec::new();
    ihdr.extend_from_slice(&1u32.to_be_bytes());
    ihdr.extend_from_slice(&1u32.to_be_bytes());
    ihdr.extend_from_slice(&[8, 0, 0, 0, 0]);
    out.extend(chunk(b"IHDR", &ihdr));
    for (k, v) in text {
        let mut body = k.as_bytes().to_vec();
        body.push(0);
        body.extend_from_slice(v.as_bytes());
        out.extend(chunk(b"tEXt", &body));
    }
    let mut z = ZlibEncoder::new(Vec::new(), Compression::default());
    z.write_all(&[0, 0x80]).expect("in-memory write");
    out.extend(chunk(b"IDAT", &z.finish().expect("in-memory write")));
    out.extend(chunk(b"IEND", b""));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iend_crc_is_the_well_known_value() {
        assert_eq!(chunk(b"IEND", b""), [0, 0, 0, 0, b'I', b'E', b'N', b'D', 0xAE, 0x42, 0x60, 0x82]);
        assert!(build_png(&[]).ends_with(&[0xAE, 0x42, 0x60, 0x82]));
    }
}
