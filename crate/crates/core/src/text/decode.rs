//! Strict decoders. Whitespace is ignored; any other byte outside the
//! alphabet rejects the whole input, reporting its offset in the original.

use base64::alphabet;
use base64::engine::{DecodePaddingMode, GeneralPurpose, GeneralPurposeConfig};
use base64::Engine;

use super::TextError;

const BASE64: GeneralPurpose = GeneralPurpose::new(
    &alphabet::STANDARD,
    GeneralPurposeConfig::new()
        .with_decode_padding_mode(DecodePaddingMode::Indifferent)
        .with_decode_allow_trailing_bits(true),
);

/// Non-whitespace bytes paired with their offsets in `data`.
fn significant(data: &[u8]) -> (Vec<u8>, Vec<usize>) {
    let mut bytes = Vec::with_capacity(data.len());
    let mut offsets = Vec::with_capacity(data.len());
    for (i, &b) in data.iter().enumerate() {
        if !b.is_ascii_whitespace() {
            bytes.push(b);
            offsets.push(i);
        }
    }
    (bytes, offsets)
}

fn is_base64_symbol(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'+' || b == b'/'
}

pub fn decode_base64(data: &[u8]) -> Result<Vec<u8>, TextError> {
    let (bytes, offsets) = significant(data);
    if bytes.is_empty() {
        return Err(TextError::Empty);
    }
    let pad_start = bytes.iter().position(|&b| b == b'=').unwrap_or(bytes.len());
    if let Some(i) = bytes[..pad_start].iter().position(|&b| !is_base64_symbol(b)) {
        return Err(TextError::Alphabet { offset: offsets[i] });
    }
    let padding = bytes.len() - pad_start;
    if let Some(i) = bytes[pad_start..].iter().position(|&b| b != b'=') {
        return Err(TextError::Alphabet {
            offset: offsets[pad_start + i],
        });
    }
    let valid_shape = if padding == 0 {
        pad_start % 4 != 1
    } else {
        padding <= 2 && bytes.len() % 4 == 0 && pad_start % 4 + padding == 4
    };
    if !valid_shape || pad_start == 0 {
        return Err(TextError::Truncated {
            offset: offsets[bytes.len() - 1],
        });
    }
    BASE64
        .decode(&bytes)
        .map_err(|e| TextError::Malformed(e.to_string()))
}

pub fn decode_hex(data: &[u8]) -> Result<Vec<u8>, TextError> {
    let (bytes, offsets) = significant(data);
    if bytes.is_empty() {
        return Err(TextError::Empty);
    }
    if let Some(i) = bytes.iter().position(|b| !b.is_ascii_hexdigit()) {
        return Err(TextError::Alphabet { offset: offsets[i] });
    }
    if bytes.len() % 2 == 1 {
        return Err(TextError::Truncated {
            offset: offsets[bytes.len() - 1],
        });
    }
    hex::decode(&bytes).map_err(|e| TextError::Malformed(e.to_string()))
}

/// Percent-decoding. `+` is kept literally.
pub fn decode_url(data: &[u8]) -> Result<Vec<u8>, TextError> {
    let (bytes, offsets) = significant(data);
    if bytes.is_empty() {
        return Err(TextError::Empty);
    }
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'%' {
            let pair = bytes.get(i + 1..i + 3);
            match pair {
                Some([h, l]) if h.is_ascii_hexdigit() && l.is_ascii_hexdigit() => {
                    let hi = (*h as char).to_digit(16).unwrap() as u8;
                    let lo = (*l as char).to_digit(16).unwrap() as u8;
                    out.push(hi << 4 | lo);
                    i += 3;
                }
                _ => return Err(TextError::Alphabet { offset: offsets[i] }),
            }
        } else if (0x21..=0x7E).contains(&b) {
            out.push(b);
            i += 1;
        } else {
            return Err(TextError::Alphabet { offset: offsets[i] });
        }
    }
    Ok(out)
}
