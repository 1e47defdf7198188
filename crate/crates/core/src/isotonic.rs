//! Weighted pool-adjacent-violators for non-decreasing fits.

use alloc::vec::Vec;

/// Least-squares non-decreasing sequence closest to `values` under `weights`.
///
/// Weights must be positive; `values` and `weights` must have equal length.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len(), "pava: length mismatch");
    // blocks of (weighted mean, total weight, run length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let total = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 + m2 * w2) / total, total, c1 + c2);
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, _, c) in blocks {
        out.extend(core::iter::repeat_n(m, c));
    }
    out
}
