use crate::error::{Error, Result};

pub const WINDOW: usize = 1024;
pub const STEP: usize = 256;
const BINS: usize = 16;
const ENTROPY_BIN_WIDTH: f64 = 8.0 / BINS as f64;

/// Shannon entropy in bits of the byte distribution of `window`.
pub fn window_entropy(window: &[u8]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::Domain("entropy of an empty window".into()));
    }
    let mut counts = [0u32; 256];
    for &b in window {
        counts[b as usize] += 1;
    }
    Ok(entropy_of_counts(&counts, window.len()))
}

fn entropy_of_counts(counts: &[u32; 256], total: usize) -> f64 {
    let n = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = f64::from(c) / n;
            h -= p * p.log2();
        }
    }
    // -sum can land a hair below zero for single-symbol input
    h.max(0.0)
}

fn entropy_bin(h: f64) -> usize {
    ((h / ENTROPY_BIN_WIDTH).floor() as usize).min(BINS - 1)
}

/// Number of windows the histogram slides over `len` bytes.
pub fn window_count(len: usize) -> usize {
    match len {
        0 => 0,
        n if n < WINDOW => 1,
        n => 1 + (n - WINDOW) / STEP,
    }
}

/// Byte/entropy histogram, flattened row-major as `flat[entropy_bin * 16 + byte_bin]`.
///
/// Every byte of every 1024-byte window (step 256) is paired with that
/// window's entropy. Bytes past the last full window are not counted; inputs
/// shorter than one window are treated as a single whole-file window.
pub fn byte_entropy_features(raw: &[u8]) -> [u64; 256] {
    let mut hist = [0u64; 256];
    let windows = window_count(raw.len());
    if windows == 0 {
        return hist;
    }
    let width = raw.len().min(WINDOW);
    let mut counts = [0u32; 256];
    for &b in &raw[..width] {
        counts[b as usize] += 1;
    }
    for w in 0..windows {
        if w > 0 {
            let start = w * STEP;
            for &b in &raw[start - STEP..start] {
                counts[b as usize] -= 1;
            }
            for &b in &raw[start + WINDOW - STEP..start + WINDOW] {
                counts[b as usize] += 1;
            }
        }
        let row = entropy_bin(entropy_of_counts(&counts, width)) * BINS;
        for (v, &c) in counts.iter().enumerate() {
            hist[row + v / BINS] += u64::from(c);
        }
    }
    hist
}
