//! Memoryless quantizer with arbitrary transition levels.
//!
//! Transitions `T_0 < T_1 < ... < T_K` define `K` codes; code `k` (1-based)
//! is emitted for inputs in `[T_{k-1}, T_k)`. Inputs below `T_0` saturate to
//! code 1 and inputs at or above `T_K` to code `K`. Codes are ordinal only;
//! no voltage is attached to them.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::rng;

/// Per-transition attempts before `make_perturbed` gives up on monotonicity.
const PERTURB_RETRIES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerModel {
    transitions: Vec<f64>,
}

impl QuantizerModel {
    /// Validates that levels are finite, strictly increasing and give `K >= 2`.
    pub fn new(transitions: Vec<f64>) -> Result<Self> {
        if transitions.len() < 3 {
            return Err(Error::Config(format!(
                "need at least 3 transition levels (K >= 2), got {}",
                transitions.len()
            )));
        }
        if let Some(i) = transitions.iter().position(|t| !t.is_finite()) {
            return Err(Error::Config(format!("transition {i} is not finite")));
        }
        if let Some(i) = transitions.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "transitions not strictly increasing at index {}: {} >= {}",
                i + 1,
                transitions[i],
                transitions[i + 1]
            )));
        }
        Ok(Self { transitions })
    }

    /// Ideal `bits`-bit quantizer spanning `[low, high]` with `2^bits` codes.
    pub fn uniform(bits: u32, low: f64, high: f64) -> Result<Self> {
        if bits == 0 || bits > 24 {
            return Err(Error::Config(format!("bits must be in 1..=24, got {bits}")));
        }
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::Config(format!("invalid full-scale range [{low}, {high}]")));
        }
        let k = 1usize << bits;
        let step = (high - low) / k as f64;
        let mut transitions: Vec<f64> = (0..=k).map(|i| low + step * i as f64).collect();
        transitions[k] = high;
        Self::new(transitions)
    }

    /// Displaces every interior transition by an independent offset drawn
    /// uniformly from `[-inl_bound, inl_bound]`. End points stay fixed.
    ///
    /// The bound must stay below half the smallest step of `base`, which
    /// keeps every individual draw able to land between its neighbours.
    pub fn perturbed(base: &QuantizerModel, inl_bound: f64, seed: u64) -> Result<Self> {
        if !(inl_bound.is_finite() && inl_bound >= 0.0) {
            return Err(Error::Config(format!("inl_bound must be >= 0, got {inl_bound}")));
        }
        if inl_bound == 0.0 {
            return Ok(base.clone());
        }
        let min_step = base
            .transitions
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if inl_bound >= 0.5 * min_step {
            return Err(Error::Config(format!(
                "inl_bound {inl_bound} must be smaller than half the minimum step {min_step}"
            )));
        }
        let mut rng = rng::substream(seed, 0);
        let ideal = &base.transitions;
        let mut t = ideal.clone();
        let last = t.len() - 1;
        for i in 1..last {
            let mut accepted = false;
            for _ in 0..PERTURB_RETRIES {
                let candidate = ideal[i] + rng.random_range(-inl_bound..=inl_bound);
                if candidate > t[i - 1] && candidate < ideal[i + 1] - inl_bound {
                    t[i] = candidate;
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                return Err(Error::Config(format!(
                    "could not place transition {i} monotonically after {PERTURB_RETRIES} draws"
                )));
            }
        }
        Self::new(t)
    }

    /// Code index in `1..=K` for input `x`; saturates outside `[T_0, T_K)`.
    #[inline]
    pub fn quantize(&self, x: f64) -> u32 {
        // number of transitions <= x, clamped into 1..=K
        let above = self.transitions.partition_point(|&t| t <= x);
        above.clamp(1, self.code_count()) as u32
    }

    #[inline]
    pub fn code_count(&self) -> usize {
        self.transitions.len() - 1
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// `T_k` for `k` in `0..=K`.
    pub fn transition(&self, k: usize) -> f64 {
        self.transitions[k]
    }

    /// Mean step `(T_K - T_0) / K`; the nominal `Δ` for uniform quantizers.
    pub fn mean_step(&self) -> f64 {
        (self.transitions[self.code_count()] - self.transitions[0]) / self.code_count() as f64
    }

    /// Representative voltage for a code: the bin midpoint for interior codes,
    /// the adjacent transition for the saturating end codes.
    pub fn code_voltage(&self, code: u32) -> f64 {
        let k = code as usize;
        let top = self.code_count();
        match k {
            0 | 1 => self.transitions[1],
            _ if k >= top => self.transitions[top - 1],
            _ => 0.5 * (self.transitions[k - 1] + self.transitions[k]),
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_values(&self.transitions)
    }

    /// Copy with `T_k` replaced for the given `(k, level)` pairs; used to
    /// splice calibrated levels into a nominal model.
    pub fn with_levels(&self, levels: &[(usize, f64)]) -> Result<Self> {
        let mut t = self.transitions.clone();
        for &(k, v) in levels {
            if k == 0 || k >= t.len() - 1 {
                return Err(Error::Config(format!("transition index {k} is not interior")));
            }
            t[k] = v;
        }
        Self::new(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn uniform_eight_bit_step() {
        let q = QuantizerModel::uniform(8, -1.0, 1.0).unwrap();
        assert_eq!(q.transitions().len(), 257);
        assert_eq!(q.mean_step(), 0.0078125);
        assert_eq!(q.transition(0), -1.0);
        assert_eq!(q.transition(256), 1.0);
    }

    #[test]
    fn uniform_one_bit() {
        let q = QuantizerModel::uniform(1, 0.0, 1.0).unwrap();
        assert_eq!(q.transitions(), &[0.0, 0.5, 1.0]);
        assert_eq!(q.code_count(), 2);
    }

    #[test]
    fn uniform_twelve_bit_step() {
        let q = QuantizerModel::uniform(12, -10.0, 10.0).unwrap();
        assert_eq!(q.mean_step(), 0.0048828125);
        for w in q.transitions().windows(2) {
            assert!((w[1] - w[0] - 0.0048828125).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_rejects_bad_input() {
        assert!(matches!(QuantizerModel::uniform(0, 0.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(QuantizerModel::uniform(4, 1.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(QuantizerModel::uniform(4, 2.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn new_rejects_non_monotone_and_tiny() {
        assert!(QuantizerModel::new(vec![0.0, 1.0]).is_err());
        assert!(QuantizerModel::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(QuantizerModel::new(vec![0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn quantize_interval_membership() {
        let q = QuantizerModel::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(q.quantize(0.5), 1);
        assert_eq!(q.quantize(1.5), 2);
        assert_eq!(q.quantize(1.0), 2);
        assert_eq!(q.quantize(0.0), 1);
    }

    #[test]
    fn quantize_saturates() {
        let q = QuantizerModel::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(q.quantize(-0.3), 1);
        assert_eq!(q.quantize(2.7), 2);
        assert_eq!(q.quantize(2.0), 2);
        assert_eq!(q.quantize(f64::NEG_INFINITY), 1);
        assert_eq!(q.quantize(f64::INFINITY), 2);
    }

    #[test]
    fn quantize_zero_on_eight_bit() {
        let q = QuantizerModel::uniform(8, -1.0, 1.0).unwrap();
        // T_128 = 0, T_129 = Δ
        assert_eq!(q.transition(128), 0.0);
        assert_eq!(q.quantize(0.0), 129);
        assert_eq!(q.quantize(-1e-12), 128);
    }

    #[test]
    fn perturbed_zero_bound_is_identity() {
        let q = QuantizerModel::uniform(6, -1.0, 1.0).unwrap();
        assert_eq!(QuantizerModel::perturbed(&q, 0.0, 9).unwrap(), q);
    }

    #[test]
    fn perturbed_twelve_bit_within_bound() {
        let q = QuantizerModel::uniform(12, -10.0, 10.0).unwrap();
        let bound = q.mean_step() / 4.0;
        let p = QuantizerModel::perturbed(&q, bound, 11).unwrap();
        let mut moved = 0;
        for (a, b) in p.transitions().iter().zip(q.transitions()) {
            assert!((a - b).abs() <= bound);
            if a != b {
                moved += 1;
            }
        }
        assert_eq!(moved, 4095);
        assert_eq!(p.transition(0), q.transition(0));
        assert_eq!(p.transition(4096), q.transition(4096));
    }

    #[test]
    fn perturbed_rejects_large_bound() {
        let q = QuantizerModel::uniform(8, -1.0, 1.0).unwrap();
        let r = QuantizerModel::perturbed(&q, 0.6 * q.mean_step(), 1);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn code_voltage_midpoints_and_ends() {
        let q = QuantizerModel::new(vec![0.0, 1.0, 3.0, 4.0]).unwrap();
        assert_eq!(q.code_voltage(1), 1.0);
        assert_eq!(q.code_voltage(2), 2.0);
        assert_eq!(q.code_voltage(3), 3.0);
    }

    proptest! {
        #[test]
        fn quantize_is_monotone(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let q = QuantizerModel::uniform(5, -1.0, 1.0).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(q.quantize(lo) <= q.quantize(hi));
        }

        #[test]
        fn quantize_matches_bin(k in 1usize..=32, frac in 0.0f64..1.0, seed in 0u64..1000) {
            let base = QuantizerModel::uniform(5, -1.0, 1.0).unwrap();
            let q = QuantizerModel::perturbed(&base, base.mean_step() * 0.3, seed).unwrap();
            let lo = q.transition(k - 1);
            let hi = q.transition(k);
            let x = lo + frac * (hi - lo);
            prop_assume!(x < hi);
            prop_assert_eq!(q.quantize(x), k as u32);
        }
    }
}
