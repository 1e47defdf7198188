//! Grouping of `(n, k)` pairs by the difference `T_k - s_n`.
//!
//! Every pair whose difference lands on the same abscissa `x_j` tells us
//! about the same CDF value `F(x_j)`, so the estimator pools them. Only the
//! interior transitions `k = 1..K-1` are used by default: with saturating
//! codes the indicator `y <= K` is always true and carries no information.

use alloc::format;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::quantizer::QuantizerModel;
use crate::stimulus;

/// Relative grouping tolerance used when inputs are exact (simulation).
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-9;

/// One set `S_j`: its abscissa and the `(n, k)` pairs it pools.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionGroup {
    pub abscissa: f64,
    pub members: Vec<(u32, u32)>,
}

impl PartitionGroup {
    /// `L_j`.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTable {
    groups: Vec<PartitionGroup>,
    tolerance: f64,
    k_range: RangeInclusive<usize>,
    samples: usize,
    code_count: usize,
    quantizer: Fingerprint,
    stimulus: Fingerprint,
}

impl PartitionTable {
    pub fn groups(&self) -> &[PartitionGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn k_range(&self) -> RangeInclusive<usize> {
        self.k_range.clone()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn code_count(&self) -> usize {
        self.code_count
    }

    pub fn quantizer_fingerprint(&self) -> Fingerprint {
        self.quantizer
    }

    pub fn stimulus_fingerprint(&self) -> Fingerprint {
        self.stimulus
    }

    /// Total number of pooled pairs, `Σ L_j`.
    pub fn pair_count(&self) -> usize {
        self.groups.iter().map(PartitionGroup::len).sum()
    }
}

/// `Δ * 1e-9`, the tolerance for exactly known inputs.
pub fn default_tolerance(q: &QuantizerModel) -> f64 {
    q.mean_step() * DEFAULT_RELATIVE_TOLERANCE
}

/// Partition over all interior transitions `k = 1..K-1`.
pub fn build_partition(q: &QuantizerModel, s: &[f64], tolerance: f64) -> Result<PartitionTable> {
    build_partition_in_range(q, s, tolerance, 1..=q.code_count() - 1)
}

/// Partition restricted to transitions `k_range` (a subset of `1..=K-1`).
///
/// Differences are sorted and chained single-linkage: consecutive values at
/// most `tolerance` apart share a group, whose abscissa is the mean of its
/// raw differences. A chain whose members would end up further than
/// `tolerance` from that mean is rejected.
pub fn build_partition_in_range(
    q: &QuantizerModel,
    s: &[f64],
    tolerance: f64,
    k_range: RangeInclusive<usize>,
) -> Result<PartitionTable> {
    if !(tolerance >= 0.0 && tolerance.is_finite()) {
        return Err(Error::Partition(format!("tolerance must be >= 0, got {tolerance}")));
    }
    if s.is_empty() {
        return Err(Error::Partition("stimulus sequence is empty".into()));
    }
    if let Some(n) = s.iter().position(|v| !v.is_finite()) {
        return Err(Error::Partition(format!("stimulus sample {n} is not finite")));
    }
    let (k_lo, k_hi) = (*k_range.start(), *k_range.end());
    if k_lo == 0 || k_hi >= q.code_count() || k_lo > k_hi {
        return Err(Error::Partition(format!(
            "transition range {k_lo}..={k_hi} must lie within 1..={}",
            q.code_count() - 1
        )));
    }

    let mut diffs: Vec<(f64, u32, u32)> = Vec::with_capacity(s.len() * (k_hi - k_lo + 1));
    for (n, &sn) in s.iter().enumerate() {
        for k in k_lo..=k_hi {
            diffs.push((q.transition(k) - sn, n as u32, k as u32));
        }
    }
    diffs.sort_unstable_by(|a, b| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });

    let mut groups = Vec::new();
    let mut start = 0;
    while start < diffs.len() {
        let mut end = start + 1;
        while end < diffs.len() && diffs[end].0 - diffs[end - 1].0 <= tolerance {
            end += 1;
        }
        let chain = &diffs[start..end];
        // offsets from the first member keep identical values bit-exact
        let base = chain[0].0;
        let offset = chain.iter().map(|d| d.0 - base).sum::<f64>() / chain.len() as f64;
        let abscissa = base + offset;
        let spread = (chain[chain.len() - 1].0 - abscissa).max(abscissa - base);
        if spread > tolerance {
            return Err(Error::Partition(format!(
                "near-equal differences around {abscissa} chain over {} (tolerance {tolerance}); \
                 reduce the grouping tolerance",
                chain[chain.len() - 1].0 - base
            )));
        }
        groups.push(PartitionGroup {
            abscissa,
            members: chain.iter().map(|d| (d.1, d.2)).collect(),
        });
        start = end;
    }

    Ok(PartitionTable {
        groups,
        tolerance,
        k_range,
        samples: s.len(),
        code_count: q.code_count(),
        quantizer: q.fingerprint(),
        stimulus: stimulus::stimulus_fingerprint(s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    use crate::stimulus::SineStimulus;

    fn example_quantizer() -> QuantizerModel {
        QuantizerModel::new(vec![-1.0, 0.0, 0.5, 1.0, 2.0]).unwrap()
    }

    #[test]
    fn hand_enumerated_groups() {
        let part = build_partition(&example_quantizer(), &[0.0, 0.5], 0.0).unwrap();
        let xs: Vec<f64> = part.groups().iter().map(|g| g.abscissa).collect();
        let ls: Vec<usize> = part.groups().iter().map(|g| g.len()).collect();
        assert_eq!(xs, vec![-0.5, 0.0, 0.5, 1.0]);
        assert_eq!(ls, vec![1, 2, 2, 1]);
        assert_eq!(part.pair_count(), 6);
        assert_eq!(part.k_range(), 1..=3);
    }

    #[test]
    fn near_equal_values_merge() {
        let q = QuantizerModel::new(vec![-1.0, 0.5, 0.75, 2.0]).unwrap();
        // differences: 0.5 - 0 and 0.5 - (-1e-12), using k = 1 only
        let part = build_partition_in_range(&q, &[0.0, -1e-12], 1e-9, 1..=1).unwrap();
        assert_eq!(part.len(), 1);
        assert_eq!(part.groups()[0].len(), 2);
        assert!((part.groups()[0].abscissa - (0.5 + 5e-13)).abs() < 1e-16);
    }

    #[test]
    fn long_chain_is_rejected() {
        let q = QuantizerModel::new(vec![-10.0, 0.0, 10.0]).unwrap();
        let s: Vec<f64> = (0..20).map(|i| i as f64 * 0.9e-9).collect();
        let r = build_partition(&q, &s, 1e-9);
        assert!(matches!(r, Err(Error::Partition(_))));
    }

    #[test]
    fn constant_stimulus_degenerates_to_thresholds() {
        let q = QuantizerModel::uniform(3, -1.0, 1.0).unwrap();
        let part = build_partition(&q, &[0.1; 5], 0.0).unwrap();
        assert_eq!(part.len(), 7);
        assert!(part.groups().iter().all(|g| g.len() == 5));
    }

    #[test]
    fn invalid_inputs() {
        let q = example_quantizer();
        assert!(build_partition(&q, &[], 0.0).is_err());
        assert!(build_partition(&q, &[0.0], -1.0).is_err());
        assert!(build_partition_in_range(&q, &[0.0], 0.0, 1..=4).is_err());
    }

    // Brute-force count of bit-distinct differences for the reference sine.
    #[test]
    fn reference_sine_distinct_differences() {
        let q = QuantizerModel::uniform(8, -1.0, 1.0).unwrap();
        let delta = q.mean_step();
        let s = SineStimulus::new(5.37 * delta, 35, 151, 5.5 * PI).render();
        let mut all: Vec<u64> = Vec::new();
        for &sn in &s {
            for k in 1..256 {
                all.push((q.transition(k) - sn).to_bits());
            }
        }
        all.sort_unstable();
        all.dedup();
        let part = build_partition(&q, &s, 0.0).unwrap();
        assert_eq!(part.len(), all.len());
        assert_eq!(part.pair_count(), 151 * 255);

        // s_n = s_{N-n} analytically for this phase, so the default tolerance
        // pools those mirror pairs: 76 distinct phases times 255 thresholds
        let pooled = build_partition(&q, &s, default_tolerance(&q)).unwrap();
        assert_eq!(pooled.len(), 76 * 255);
    }

    proptest! {
        #[test]
        fn invariants_hold(
            s in proptest::collection::vec(-1.5f64..1.5, 1..12),
            bits in 1u32..5,
            tol_exp in -12i32..-2,
        ) {
            let q = QuantizerModel::uniform(bits, -1.0, 1.0).unwrap();
            let tol = 10f64.powi(tol_exp);
            let Ok(part) = build_partition(&q, &s, tol) else { return Ok(()); };
            prop_assert_eq!(part.pair_count(), s.len() * (q.code_count() - 1));
            for g in part.groups() {
                for &(n, k) in &g.members {
                    let d = q.transition(k as usize) - s[n as usize];
                    prop_assert!((d - g.abscissa).abs() <= tol);
                }
            }
            for w in part.groups().windows(2) {
                prop_assert!(w[1].abscissa - w[0].abscissa > tol);
            }
        }

        #[test]
        fn permutation_invariant(s in proptest::collection::vec(-1.5f64..1.5, 2..10), rot in 0usize..10) {
            let q = QuantizerModel::uniform(3, -1.0, 1.0).unwrap();
            let mut t = s.clone();
            let len = t.len();
            t.rotate_left(rot % len);
            let a = build_partition(&q, &s, 0.0).unwrap();
            let b = build_partition(&q, &t, 0.0).unwrap();
            let ka: Vec<(u64, usize)> = a.groups().iter().map(|g| (g.abscissa.to_bits(), g.len())).collect();
            let kb: Vec<(u64, usize)> = b.groups().iter().map(|g| (g.abscissa.to_bits(), g.len())).collect();
            prop_assert_eq!(ka, kb);
        }
    }
}
