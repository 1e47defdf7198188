//! Quantized output records and their per-sample cumulative code counts.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::quantizer::QuantizerModel;
use crate::stimulus::{self, Matrix, NoiseModel};

/// `N × R` code matrix `y(n, r)` tagged with the quantizer and stimulus it
/// is assumed to come from.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeRecords {
    codes: Matrix<u32>,
    code_count: usize,
    quantizer: Fingerprint,
    stimulus: Fingerprint,
}

impl CodeRecords {
    /// Wraps an existing code matrix; every code must lie in `1..=K`.
    pub fn new(
        codes: Matrix<u32>,
        quantizer: &QuantizerModel,
        stimulus: &[f64],
    ) -> Result<Self> {
        if stimulus.len() != codes.samples() {
            return Err(Error::Estimation(format!(
                "stimulus has {} samples but records have {}",
                stimulus.len(),
                codes.samples()
            )));
        }
        let k = quantizer.code_count();
        if let Some(bad) = codes.as_slice().iter().find(|&&c| c == 0 || c as usize > k) {
            return Err(Error::Estimation(format!("code {bad} outside 1..={k}")));
        }
        Ok(Self {
            codes,
            code_count: k,
            quantizer: quantizer.fingerprint(),
            stimulus: stimulus::stimulus_fingerprint(stimulus),
        })
    }

    /// Quantizes a noisy sample matrix acquired with stimulus `s`.
    pub fn quantize(q: &QuantizerModel, x: &Matrix<f64>, s: &[f64]) -> Result<Self> {
        Self::new(x.map(|v| q.quantize(v)), q, s)
    }

    /// Re-tags the records with the quantizer and stimulus the estimator should
    /// assume, e.g. calibrated transitions or a sine-fitted sequence.
    pub fn assume_inputs(mut self, quantizer: &QuantizerModel, stimulus: &[f64]) -> Result<Self> {
        if quantizer.code_count() != self.code_count || stimulus.len() != self.codes.samples() {
            return Err(Error::Estimation(
                "assumed quantizer/stimulus dimensions do not match the records".into(),
            ));
        }
        self.quantizer = quantizer.fingerprint();
        self.stimulus = stimulus::stimulus_fingerprint(stimulus);
        Ok(self)
    }

    pub fn codes(&self) -> &Matrix<u32> {
        &self.codes
    }

    pub fn samples(&self) -> usize {
        self.codes.samples()
    }

    pub fn records(&self) -> usize {
        self.codes.records()
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

    /// Representative voltage of every code (see [`QuantizerModel::code_voltage`]).
    pub fn to_voltages(&self, q: &QuantizerModel) -> Matrix<f64> {
        self.codes.map(|c| q.code_voltage(c))
    }
}

/// Codes for record `r` of a noisy acquisition, without materialising `x(n, r)`.
pub fn acquire_record(q: &QuantizerModel, s: &[f64], noise: &NoiseModel, record: usize) -> Vec<u32> {
    let mut rng = noise.record_rng(record);
    s.iter().map(|&sn| q.quantize(sn + noise.sample(&mut rng))).collect()
}

/// Sufficient statistic for the CDF estimator: for each sample index `n`,
/// the number of records whose code is `<= k`, for `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeCounts {
    samples: usize,
    code_count: usize,
    records: u64,
    // per-code histogram, N × (K + 1); turned cumulative by `finish`
    counts: Vec<u64>,
    cumulative: bool,
    quantizer: Fingerprint,
    stimulus: Fingerprint,
}

impl CumulativeCounts {
    pub fn new(quantizer: &QuantizerModel, stimulus: &[f64]) -> Self {
        let k = quantizer.code_count();
        Self {
            samples: stimulus.len(),
            code_count: k,
            records: 0,
            counts: vec![0; stimulus.len() * (k + 1)],
            cumulative: false,
            quantizer: quantizer.fingerprint(),
            stimulus: stimulus::stimulus_fingerprint(stimulus),
        }
    }

    pub fn from_records(records: &CodeRecords) -> Self {
        let mut out = Self {
            samples: records.samples(),
            code_count: records.code_count,
            records: 0,
            counts: vec![0; records.samples() * (records.code_count + 1)],
            cumulative: false,
            quantizer: records.quantizer,
            stimulus: records.stimulus,
        };
        for r in 0..records.records() {
            out.add_record(records.codes.record(r));
        }
        out.finish();
        out
    }

    /// Adds one record (one code per sample index).
    pub fn add_record(&mut self, codes: &[u32]) {
        assert!(!self.cumulative, "add_record after finish");
        assert_eq!(codes.len(), self.samples, "record length mismatch");
        let stride = self.code_count + 1;
        for (n, &c) in codes.iter().enumerate() {
            self.counts[n * stride + c as usize] += 1;
        }
        self.records += 1;
    }

    /// Adds the histogram accumulated by another partial count; used to merge
    /// chunks produced in parallel.
    pub fn merge(&mut self, other: &CumulativeCounts) -> Result<()> {
        if self.cumulative || other.cumulative {
            return Err(Error::Estimation("cannot merge finished counts".into()));
        }
        if other.samples != self.samples
            || other.code_count != self.code_count
            || other.quantizer != self.quantizer
            || other.stimulus != self.stimulus
        {
            return Err(Error::Estimation("merging counts from different acquisitions".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.records += other.records;
        Ok(())
    }

    /// Converts histograms to cumulative counts; idempotent.
    pub fn finish(&mut self) {
        if self.cumulative {
            return;
        }
        let stride = self.code_count + 1;
        for row in self.counts.chunks_mut(stride) {
            let mut acc = 0;
            for c in row {
                acc += *c;
                *c = acc;
            }
        }
        self.cumulative = true;
    }

    /// `#{r : y(n, r) <= k}`.
    #[inline]
    pub fn at_or_below(&self, n: usize, k: usize) -> u64 {
        debug_assert!(self.cumulative);
        self.counts[n * (self.code_count + 1) + k]
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn code_count(&self) -> usize {
        self.code_count
    }

    pub fn is_finished(&self) -> bool {
        self.cumulative
    }

    pub fn quantizer_fingerprint(&self) -> Fingerprint {
        self.quantizer
    }

    pub fn stimulus_fingerprint(&self) -> Fingerprint {
        self.stimulus
    }

    pub fn assume_inputs(mut self, quantizer: &QuantizerModel, stimulus: &[f64]) -> Result<Self> {
        if quantizer.code_count() != self.code_count || stimulus.len() != self.samples {
            return Err(Error::Estimation(
                "assumed quantizer/stimulus dimensions do not match the counts".into(),
            ));
        }
        self.quantizer = quantizer.fingerprint();
        self.stimulus = stimulus::stimulus_fingerprint(stimulus);
        Ok(self)
    }
}
