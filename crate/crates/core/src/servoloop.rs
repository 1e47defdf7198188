//! Transition-level calibration by the servoloop method.
//!
//! A DC level `v` is applied to the device and `M` codes are read back. If
//! more than half of them are `<= k` the level is below `T_k` and is raised,
//! otherwise it is lowered. The step shrinks by `decay` every time the
//! direction reverses; the loop stops once the step falls below the
//! tolerance. The fixed point is the level where `P(code <= k) = 1/2`, i.e.
//! `T_k - median(η)`: a noise offset is indistinguishable from a shift of
//! the transitions.
//!
//! Indexing: target `k` in `1..=K-1` locates `T_k`, the boundary between
//! codes `k` and `k + 1`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::quantizer::QuantizerModel;
use crate::rng::{self, StreamRng};
use crate::stimulus::NoiseModel;

/// Sparse histogram of codes returned by one DC acquisition.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CodeHistogram {
    /// `(code, count)` sorted by code.
    pub counts: Vec<(u32, u64)>,
}

impl CodeHistogram {
    pub fn from_codes(mut codes: Vec<u32>) -> Self {
        codes.sort_unstable();
        let mut counts: Vec<(u32, u64)> = Vec::new();
        for c in codes {
            match counts.last_mut() {
                Some((last, n)) if *last == c => *n += 1,
                _ => counts.push((c, 1)),
            }
        }
        Self { counts }
    }

    /// Counts one more occurrence of `code`.
    pub fn add(&mut self, code: u32) {
        match self.counts.binary_search_by_key(&code, |c| c.0) {
            Ok(i) => self.counts[i].1 += 1,
            Err(i) => self.counts.insert(i, (code, 1)),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|c| c.1).sum()
    }

    /// Fraction of samples with code `<= k`.
    pub fn fraction_at_or_below(&self, k: u32) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let below: u64 = self.counts.iter().take_while(|c| c.0 <= k).map(|c| c.1).sum();
        below as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceConcurrency {
    /// Independent instances may be driven from several threads.
    Concurrent,
    /// Holds external state (hardware); drive one request at a time.
    Sequential,
}

/// Black-box DC source plus quantizer. The servoloop only ever sees codes.
pub trait DcDevice {
    fn sample(&mut self, level: f64, count: usize) -> CodeHistogram;

    fn concurrency(&self) -> DeviceConcurrency {
        DeviceConcurrency::Sequential
    }
}

/// Quantizer with additive noise, driven by a seeded generator.
#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    quantizer: QuantizerModel,
    noise: NoiseModel,
    rng: StreamRng,
}

impl SimulatedDevice {
    pub fn new(quantizer: QuantizerModel, noise: NoiseModel) -> Self {
        let rng = rng::substream(noise.seed, u64::MAX);
        Self { quantizer, noise, rng }
    }

    /// Same device, fresh independent generator for `stream`.
    pub fn fork(&self, stream: u64) -> Self {
        let mut dev = self.clone();
        dev.rng = rng::substream(rng::derive_seed(self.noise.seed, stream), u64::MAX);
        dev
    }

    pub fn quantizer(&self) -> &QuantizerModel {
        &self.quantizer
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }
}

impl DcDevice for SimulatedDevice {
    fn sample(&mut self, level: f64, count: usize) -> CodeHistogram {
        let mut hist = CodeHistogram::default();
        for _ in 0..count {
            hist.add(self.quantizer.quantize(level + self.noise.sample(&mut self.rng)));
        }
        hist
    }

    fn concurrency(&self) -> DeviceConcurrency {
        DeviceConcurrency::Concurrent
    }
}

/// Noiseless quantizer; cannot dither a threshold.
#[derive(Debug, Clone)]
pub struct IdealDevice(pub QuantizerModel);

impl DcDevice for IdealDevice {
    fn sample(&mut self, level: f64, count: usize) -> CodeHistogram {
        CodeHistogram { counts: alloc::vec![(self.0.quantize(level), count as u64)] }
    }

    fn concurrency(&self) -> DeviceConcurrency {
        DeviceConcurrency::Concurrent
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoloopConfig {
    /// `M`, samples per DC step.
    pub samples_per_step: usize,
    pub initial_step: f64,
    /// Step multiplier applied on every direction reversal, in `(0, 1)`.
    pub decay: f64,
    pub max_iterations: usize,
    /// Stop once the step is below this many volts.
    pub tolerance: f64,
}

impl ServoloopConfig {
    /// Defaults scaled to a nominal step `delta`.
    pub fn for_step(delta: f64) -> Self {
        Self {
            samples_per_step: 10_000,
            initial_step: 0.25 * delta,
            decay: 0.5,
            max_iterations: 500,
            tolerance: 1e-3 * delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_step == 0 {
            return Err(Error::Config("samples_per_step must be >= 1".into()));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Config(format!("decay must be in (0, 1), got {}", self.decay)));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Config("initial_step must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEstimate {
    pub k: usize,
    pub level: f64,
    pub iterations: usize,
    /// Fraction of codes `<= k` measured at the final level.
    pub final_fraction: f64,
    pub converged: bool,
}

/// Locates `T_k` starting from the DC level `start`.
pub fn servoloop<D: DcDevice + ?Sized>(
    device: &mut D,
    cfg: &ServoloopConfig,
    k: usize,
    start: f64,
) -> Result<TransitionEstimate> {
    cfg.validate()?;
    let code = k as u32;
    let m = cfg.samples_per_step;
    let mut level = start;
    let mut step = cfg.initial_step;
    let mut last_dir = 0i8;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let p = device.sample(level, m).fraction_at_or_below(code);
        let dir = if p > 0.5 { 1 } else { -1 };
        if last_dir != 0 && dir != last_dir {
            step *= cfg.decay;
        }
        if step < cfg.tolerance {
            converged = true;
            break;
        }
        level += f64::from(dir) * step;
        last_dir = dir;
    }

    let below = device.sample(level - cfg.tolerance, m).fraction_at_or_below(code);
    let above = device.sample(level + cfg.tolerance, m).fraction_at_or_below(code);
    let degenerate = |p: f64| p == 0.0 || p == 1.0;
    if degenerate(below) && degenerate(above) {
        return Err(Error::Calibration(format!(
            "transition {k}: output never straddles the threshold; noise required to dither the threshold"
        )));
    }
    let final_fraction = device.sample(level, m).fraction_at_or_below(code);
    Ok(TransitionEstimate { k, level, iterations, final_fraction, converged })
}

/// Least-squares line `T̂_k ≈ gain · k + offset` and the largest deviation from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub gain: f64,
    pub offset: f64,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// Successful per-code runs sorted by `k`.
    pub entries: Vec<TransitionEstimate>,
    pub failures: Vec<(usize, Error)>,
    pub line: Option<LineFit>,
}

impl CalibrationResult {
    pub fn levels(&self) -> Vec<(usize, f64)> {
        self.entries.iter().map(|e| (e.k, e.level)).collect()
    }

    pub fn all_converged(&self) -> bool {
        self.failures.is_empty() && self.entries.iter().all(|e| e.converged)
    }

    /// Splices the calibrated levels into `nominal`, yielding a quantizer model.
    pub fn to_quantizer(&self, nominal: &QuantizerModel) -> Result<QuantizerModel> {
        nominal.with_levels(&self.levels())
    }
}

/// Runs the servoloop for every code; per-code failures are collected, not fatal.
pub fn calibrate_all<D: DcDevice + ?Sized>(
    device: &mut D,
    cfg: &ServoloopConfig,
    codes: &[usize],
    start: impl Fn(usize) -> f64,
) -> Result<CalibrationResult> {
    cfg.validate()?;
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for &k in codes {
        match servoloop(device, cfg, k, start(k)) {
            Ok(e) => entries.push(e),
            Err(e) => failures.push((k, e)),
        }
    }
    entries.sort_by_key(|e| e.k);
    let line = fit_line(&entries);
    Ok(CalibrationResult { entries, failures, line })
}

pub fn fit_line(entries: &[TransitionEstimate]) -> Option<LineFit> {
    if entries.len() < 2 {
        return None;
    }
    let n = entries.len() as f64;
    let mk = entries.iter().map(|e| e.k as f64).sum::<f64>() / n;
    let mt = entries.iter().map(|e| e.level).sum::<f64>() / n;
    let sxx: f64 = entries.iter().map(|e| (e.k as f64 - mk) * (e.k as f64 - mk)).sum();
    let sxy: f64 = entries.iter().map(|e| (e.k as f64 - mk) * (e.level - mt)).sum();
    let gain = sxy / sxx;
    let offset = mt - gain * mk;
    let max_deviation = entries
        .iter()
        .map(|e| (e.level - (gain * e.k as f64 + offset)).abs())
        .fold(0.0, f64::max);
    Some(LineFit { gain, offset, max_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::NoiseFamily;

    fn eight_bit() -> QuantizerModel {
        QuantizerModel::uniform(8, -1.0, 1.0).unwrap()
    }

    #[test]
    fn histogram_fraction() {
        let h = CodeHistogram::from_codes(alloc::vec![3, 1, 2, 2, 5]);
        assert_eq!(h.counts, alloc::vec![(1, 1), (2, 2), (3, 1), (5, 1)]);
        assert_eq!(h.fraction_at_or_below(2), 0.6);
        assert_eq!(h.fraction_at_or_below(0), 0.0);
        assert_eq!(h.fraction_at_or_below(9), 1.0);
    }

    #[test]
    fn recovers_mid_range_transitions() {
        let q = eight_bit();
        let d = q.mean_step();
        let mut dev = SimulatedDevice::new(q.clone(), NoiseModel::gaussian(0.0, 0.2 * d, 17));
        let cfg = ServoloopConfig::for_step(d);
        for k in [100, 128, 129, 150] {
            let e = servoloop(&mut dev, &cfg, k, q.transition(k) + 0.3 * d).unwrap();
            assert!(e.converged);
            assert!((e.level - q.transition(k)).abs() <= 0.02 * d, "k={k}: {}", e.level);
            assert!((e.final_fraction - 0.5).abs() < 0.1);
        }
    }

    #[test]
    fn symmetric_families_converge_to_transition() {
        let q = eight_bit();
        let d = q.mean_step();
        let cfg = ServoloopConfig::for_step(d);
        for family in [NoiseFamily::Uniform, NoiseFamily::Laplace] {
            let noise = NoiseModel { family, location: 0.0, scale: 0.3 * d, seed: 4 };
            let mut dev = SimulatedDevice::new(q.clone(), noise);
            let e = servoloop(&mut dev, &cfg, 140, q.transition(140) - 0.4 * d).unwrap();
            assert!((e.level - q.transition(140)).abs() <= 0.02 * d);
        }
    }

    #[test]
    fn noise_offset_shifts_fixed_point() {
        let q = eight_bit();
        let d = q.mean_step();
        let mut dev = SimulatedDevice::new(q.clone(), NoiseModel::gaussian(0.1 * d, 0.2 * d, 8));
        let e = servoloop(&mut dev, &ServoloopConfig::for_step(d), 128, 0.0).unwrap();
        assert!((e.level - (q.transition(128) - 0.1 * d)).abs() <= 0.02 * d);
    }

    #[test]
    fn noiseless_device_rejected() {
        let q = eight_bit();
        let mut dev = IdealDevice(q.clone());
        let cfg = ServoloopConfig::for_step(q.mean_step());
        let r = servoloop(&mut dev, &cfg, 128, 0.003);
        assert!(matches!(r, Err(Error::Calibration(_))));
        let all = calibrate_all(&mut dev, &cfg, &[120, 128], |k| q.transition(k)).unwrap();
        assert!(all.entries.is_empty());
        assert_eq!(all.failures.len(), 2);
    }

    #[test]
    fn iteration_cap_reports_unconverged() {
        let q = eight_bit();
        let d = q.mean_step();
        let mut dev = SimulatedDevice::new(q.clone(), NoiseModel::gaussian(0.0, 0.2 * d, 2));
        let cfg = ServoloopConfig { max_iterations: 3, ..ServoloopConfig::for_step(d) };
        let e = servoloop(&mut dev, &cfg, 128, 0.0).unwrap();
        assert!(!e.converged);
        assert_eq!(e.iterations, 3);
    }

    #[test]
    fn ideal_quantizer_line_is_flat() {
        let q = eight_bit();
        let d = q.mean_step();
        let mut dev = SimulatedDevice::new(q.clone(), NoiseModel::gaussian(0.0, 0.2 * d, 5));
        let cfg = ServoloopConfig::for_step(d);
        let codes: Vec<usize> = (110..=146).step_by(4).collect();
        let cal = calibrate_all(&mut dev, &cfg, &codes, |k| q.transition(k) + 0.2 * d).unwrap();
        assert!(cal.all_converged());
        let line = cal.line.unwrap();
        assert!((line.gain - d).abs() < 1e-3 * d);
        assert!(line.max_deviation <= 0.02 * d, "{}", line.max_deviation / d);
        for w in cal.entries.windows(2) {
            assert!(w[0].level < w[1].level);
        }
        let calibrated = cal.to_quantizer(&q).unwrap();
        assert!((calibrated.transition(128) - q.transition(128)).abs() <= 0.02 * d);
    }

    #[test]
    fn invalid_config() {
        let q = eight_bit();
        let mut dev = IdealDevice(q);
        let bad = ServoloopConfig { decay: 1.0, ..ServoloopConfig::for_step(0.01) };
        assert!(matches!(servoloop(&mut dev, &bad, 1, 0.0), Err(Error::Config(_))));
        let bad = ServoloopConfig { samples_per_step: 0, ..ServoloopConfig::for_step(0.01) };
        assert!(servoloop(&mut dev, &bad, 1, 0.0).is_err());
    }
}
