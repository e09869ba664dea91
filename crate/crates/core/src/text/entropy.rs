use serde::{Deserialize, Serialize};

use super::TextError;

pub const DEFAULT_WINDOW: usize = 1024;
pub const DEFAULT_STRIDE: usize = 512;
pub const DEFAULT_HIGH_THRESHOLD: f64 = 7.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub window_size: usize,
    pub stride: usize,
    /// Bits per byte, one value per window starting at `i * stride`.
    pub values: Vec<f64>,
}

impl EntropyProfile {
    /// Start offsets of windows whose entropy reaches `threshold`.
    pub fn high_regions(&self, threshold: f64) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, h)| **h >= threshold)
            .map(|(i, _)| i * self.stride)
            .collect()
    }
}

fn entropy_of(counts: &[u32; 256], n: usize) -> f64 {
    let n = n as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h.clamp(0.0, 8.0)
}

/// Windowed Shannon entropy. Input shorter than `window` yields an empty
/// profile.
pub fn shannon_entropy(data: &[u8], window: usize, stride: usize) -> Result<EntropyProfile, TextError> {
    if window == 0 || stride == 0 {
        return Err(TextError::InvalidArgument(format!(
            "window ({window}) and stride ({stride}) must be at least 1"
        )));
    }
    let mut values = Vec::new();
    if data.len() >= window {
        let count = (data.len() - window) / stride + 1;
        values.reserve(count);
        let mut counts = [0u32; 256];
        for &b in &data[..window] {
            counts[b as usize] += 1;
        }
        values.push(entropy_of(&counts, window));
        for i in 1..count {
            let start = i * stride;
            if stride < window {
                for &b in &data[start - stride..start] {
                    counts[b as usize] -= 1;
                }
                let prev_end = start - stride + window;
                for &b in &data[prev_end..start + window] {
                    counts[b as usize] += 1;
                }
            } else {
                counts = [0; 256];
                for &b in &data[start..start + window] {
                    counts[b as usize] += 1;
                }
            }
            values.push(entropy_of(&counts, window));
        }
    }
    Ok(EntropyProfile {
        window_size: window,
        stride,
        values,
    })
}
