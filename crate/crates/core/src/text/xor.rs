use serde::{Deserialize, Serialize};

use super::strings::printable_ratio;
use super::TextError;

pub const DEFAULT_MIN_SCORE: f64 = 0.85;
pub const MIN_XOR_INPUT: usize = 8;
const PREVIEW_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorCandidate {
    pub key: u8,
    /// Printable ratio of the decoded bytes.
    pub score: f64,
    pub preview: Vec<u8>,
}

pub fn xor_bytes(data: &[u8], key: u8) -> Vec<u8> {
    data.iter().map(|b| b ^ key).collect()
}

/// Share of letters, digits and spaces; orders candidates tied on score.
fn wordiness(data: &[u8]) -> f64 {
    let n = data.iter().filter(|b| b.is_ascii_alphanumeric() || **b == b' ').count();
    n as f64 / data.len() as f64
}

/// Tries every non-zero single-byte key and keeps those whose output is
/// mostly printable. Candidates are ordered by score, then by the share of
/// alphanumerics and spaces, then by key.
pub fn xor_brute(data: &[u8], min_score: f64) -> Result<Vec<XorCandidate>, TextError> {
    if data.len() < MIN_XOR_INPUT {
        return Err(TextError::TooShort {
            len: data.len(),
            min: MIN_XOR_INPUT,
        });
    }
    let mut ranked: Vec<(XorCandidate, f64)> = (1..=255u8)
        .filter_map(|key| {
            let decoded = xor_bytes(data, key);
            let score = printable_ratio(&decoded);
            (score >= min_score).then(|| {
                let w = wordiness(&decoded);
                let preview = decoded.into_iter().take(PREVIEW_LEN).collect();
                (XorCandidate { key, score, preview }, w)
            })
        })
        .collect();
    ranked.sort_by(|(a, wa), (b, wb)| {
        b.score
            .total_cmp(&a.score)
            .then(wb.total_cmp(wa))
            .then(a.key.cmp(&b.key))
    });
    Ok(ranked.into_iter().map(|(c, _)| c).collect())
}
