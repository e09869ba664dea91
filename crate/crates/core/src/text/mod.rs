//! Content-agnostic analysis: strings, indicators, entropy and the
//! de-obfuscation transforms.

mod decode;
mod entropy;
mod ioc;
mod jsdecode;
mod strings;
mod xor;

pub use decode::{decode_base64, decode_hex, decode_url};
pub use entropy::{shannon_entropy, EntropyProfile, DEFAULT_HIGH_THRESHOLD, DEFAULT_STRIDE, DEFAULT_WINDOW};
pub use ioc::{extract_iocs, extract_iocs_from_text, Finding, IocKind, IocMatch};
pub use jsdecode::{js_charcode_decode, uses_charcode_obfuscation, JsDecoded};
pub use strings::{extract_strings, ExtractedString, StringEncoding, DEFAULT_MIN_LENGTH};
pub use xor::{xor_brute, xor_bytes, XorCandidate, DEFAULT_MIN_SCORE, MIN_XOR_INPUT};

pub(crate) use strings::{is_printable_ascii, printable_ratio};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextError {
    #[error("alphabet violation at offset {offset}")]
    Alphabet { offset: usize },
    #[error("incomplete encoded group ending at offset {offset}")]
    Truncated { offset: usize },
    #[error("nothing to decode")]
    Empty,
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("input of {len} bytes is shorter than the required {min}")]
    TooShort { len: usize, min: usize },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
