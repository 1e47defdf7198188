//! Deterministic stimulus sequences and additive noise.
//!
//! The quantizer input is `x(n, r) = s_n + η(n, r)` with `η` i.i.d. over both
//! the time index `n` and the record index `r`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::rng::{self, StreamRng};

/// Coherently sampled sine `s_n = A sin(2πλn/N + φ0) + C`, `n = 0..N-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SineStimulus {
    pub amplitude: f64,
    pub periods: u32,
    pub samples: usize,
    pub initial_phase: f64,
    pub offset: f64,
}

impl SineStimulus {
    pub fn new(amplitude: f64, periods: u32, samples: usize, initial_phase: f64) -> Self {
        Self { amplitude, periods, samples, initial_phase, offset: 0.0 }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 3 {
            return Err(Error::Config(format!("sine needs N >= 3 samples, got {}", self.samples)));
        }
        if self.periods == 0 {
            return Err(Error::Config("sine needs at least one period".into()));
        }
        if ![self.amplitude, self.initial_phase, self.offset].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("sine parameters must be finite".into()));
        }
        Ok(())
    }

    /// `true` when `gcd(λ, N) = 1`, i.e. all `N` phases are distinct.
    pub fn is_coherent(&self) -> bool {
        gcd(self.periods as u64, self.samples as u64) == 1
    }

    pub fn render(&self) -> Vec<f64> {
        render_sine(self.amplitude, self.periods, self.samples, self.initial_phase, self.offset)
    }
}

pub(crate) fn render_sine(
    amplitude: f64,
    periods: u32,
    samples: usize,
    phase: f64,
    offset: f64,
) -> Vec<f64> {
    let n_total = samples as f64;
    let lambda = periods as f64;
    (0..samples)
        .map(|n| {
            let arg = 2.0 * PI * lambda * n as f64 / n_total + phase;
            amplitude * libm::sin(arg) + offset
        })
        .collect()
}

/// DC levels applied one at a time; each level plays the role of one `s_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweptDcStimulus {
    pub levels: Vec<f64>,
}

impl SweptDcStimulus {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config("swept DC needs at least one level".into()));
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("swept DC levels must be finite".into()));
        }
        Ok(Self { levels })
    }

    /// `low, low + step, ...` up to and including `high` (within `step * 1e-9`).
    pub fn grid(low: f64, high: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && low <= high && low.is_finite() && high.is_finite()) {
            return Err(Error::Config(format!("invalid DC grid [{low}, {high}] step {step}")));
        }
        let count = libm::floor((high - low) / step + 1e-9) as usize + 1;
        Self::new((0..count).map(|i| low + step * i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stimulus {
    Sine(SineStimulus),
    SweptDc(SweptDcStimulus),
}

impl Stimulus {
    pub fn validate(&self) -> Result<()> {
        match self {
            Stimulus::Sine(s) => s.validate(),
            Stimulus::SweptDc(s) => SweptDcStimulus::new(s.levels.clone()).map(|_| ()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Stimulus::Sine(s) => s.samples,
            Stimulus::SweptDc(s) => s.levels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn render(&self) -> Vec<f64> {
        match self {
            Stimulus::Sine(s) => s.render(),
            Stimulus::SweptDc(s) => s.levels.clone(),
        }
    }
}

/// Fingerprint of a rendered stimulus sequence.
pub fn stimulus_fingerprint(s: &[f64]) -> Fingerprint {
    Fingerprint::of_values(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    /// `scale` is the standard deviation.
    Gaussian,
    /// `scale` is the half-width: `η ~ U(μ - scale, μ + scale)`.
    Uniform,
    /// `scale` is the Laplace diversity `b`.
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub family: NoiseFamily,
    pub location: f64,
    pub scale: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn gaussian(location: f64, sigma: f64, seed: u64) -> Self {
        Self { family: NoiseFamily::Gaussian, location, scale: sigma, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("noise scale must be > 0, got {}", self.scale)));
        }
        if !self.location.is_finite() {
            return Err(Error::Config("noise location must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let unit: f64 = match self.family {
            NoiseFamily::Gaussian => StandardNormal.sample(rng),
            NoiseFamily::Uniform => rng.random_range(-1.0..1.0),
            NoiseFamily::Laplace => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            }
        };
        self.location + self.scale * unit
    }

    /// Analytic CDF of the noise.
    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        match self.family {
            NoiseFamily::Gaussian => crate::normal::cdf(z),
            NoiseFamily::Uniform => (0.5 * (z + 1.0)).clamp(0.0, 1.0),
            NoiseFamily::Laplace => {
                if z < 0.0 {
                    0.5 * libm::exp(z)
                } else {
                    1.0 - 0.5 * libm::exp(-z)
                }
            }
        }
    }

    /// Analytic density of the noise.
    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        match self.family {
            NoiseFamily::Gaussian => crate::normal::pdf(z) / self.scale,
            NoiseFamily::Uniform => {
                if z.abs() <= 1.0 {
                    0.5 / self.scale
                } else {
                    0.0
                }
            }
            NoiseFamily::Laplace => 0.5 * libm::exp(-z.abs()) / self.scale,
        }
    }

    /// Median; the point a servoloop converges to relative to a transition.
    pub fn median(&self) -> f64 {
        self.location
    }

    /// Generator for record `r`.
    pub fn record_rng(&self, record: usize) -> StreamRng {
        rng::substream(self.seed, record as u64)
    }
}

/// Stimulus plus noise plus record count.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusPlan {
    pub stimulus: Stimulus,
    pub noise: NoiseModel,
    pub records: usize,
}

impl StimulusPlan {
    pub fn validate(&self) -> Result<()> {
        self.stimulus.validate()?;
        self.noise.validate()?;
        if self.records == 0 {
            return Err(Error::Config("need at least one record".into()));
        }
        Ok(())
    }
}

/// Dense `N × R` matrix stored record-major (`data[r * N + n]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    samples: usize,
    records: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn from_records(samples: usize, records: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != samples * records {
            return Err(Error::Config(format!(
                "matrix data has {} entries, expected {samples} x {records}",
                data.len()
            )));
        }
        Ok(Self { samples, records, data })
    }

    #[inline]
    pub fn get(&self, n: usize, r: usize) -> T {
        self.data[r * self.samples + n]
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn records(&self) -> usize {
        self.records
    }

    /// The full record `{y(n, r)}_n`.
    pub fn record(&self, r: usize) -> &[T] {
        &self.data[r * self.samples..(r + 1) * self.samples]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            samples: self.samples,
            records: self.records,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Noisy record `r`: `x(n, r) = s_n + η(n, r)`, drawn from the record's own substream.
pub fn synthesize_record(s: &[f64], noise: &NoiseModel, record: usize) -> Vec<f64> {
    let mut rng = noise.record_rng(record);
    s.iter().map(|&sn| sn + noise.sample(&mut rng)).collect()
}

/// Full noisy sample matrix for a plan.
pub fn synthesize(plan: &StimulusPlan) -> Result<Matrix<f64>> {
    plan.validate()?;
    let s = plan.stimulus.render();
    let mut data = Vec::with_capacity(s.len() * plan.records);
    for r in 0..plan.records {
        data.extend(synthesize_record(&s, &plan.noise, r));
    }
    Matrix::from_records(s.len(), plan.records, data)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const DELTA: f64 = 2.0 / 256.0;

    #[test]
    fn quarter_period_sine() {
        let s = SineStimulus::new(1.0, 1, 4, 0.0).render();
        let expect = [0.0, 1.0, 0.0, -1.0];
        for (a, b) in s.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn reference_sine_bounded_by_amplitude() {
        let sine = SineStimulus::new(5.37 * DELTA, 35, 151, 5.5 * PI);
        assert!(sine.is_coherent());
        let s = sine.render();
        assert_eq!(s.len(), 151);
        assert!(s.iter().all(|v| v.abs() <= 5.37 * DELTA));
    }

    #[test]
    fn swept_dc_is_verbatim() {
        let d = 20.0 / 4096.0;
        let dc = SweptDcStimulus::grid(-4.0 * d, 4.0 * d, 2.45e-4).unwrap();
        assert_eq!(dc.levels.len(), 160);
        assert_eq!(dc.levels[0], -4.0 * d);
        let st = Stimulus::SweptDc(dc.clone());
        assert_eq!(st.render(), dc.levels);
    }

    #[test]
    fn invalid_stimuli_rejected() {
        assert!(SineStimulus::new(1.0, 1, 2, 0.0).validate().is_err());
        assert!(SweptDcStimulus::new(vec![]).is_err());
        assert!(NoiseModel::gaussian(0.0, 0.0, 1).validate().is_err());
    }

    fn plan(sigma: f64, records: usize) -> StimulusPlan {
        StimulusPlan {
            stimulus: Stimulus::Sine(SineStimulus::new(5.37 * DELTA, 35, 151, 5.5 * PI)),
            noise: NoiseModel::gaussian(0.0, sigma, 42),
            records,
        }
    }

    #[test]
    fn vanishing_noise() {
        let p = plan(1e-15, 5);
        let s = p.stimulus.render();
        let x = synthesize(&p).unwrap();
        for r in 0..5 {
            for n in 0..151 {
                assert!((x.get(n, r) - s[n]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn noise_mean_within_standard_error() {
        let sigma = 0.25 * DELTA;
        let p = plan(sigma, 1000);
        let s = p.stimulus.render();
        let x = synthesize(&p).unwrap();
        let mut sum = 0.0;
        for r in 0..1000 {
            for n in 0..151 {
                sum += x.get(n, r) - s[n];
            }
        }
        let cells = (151 * 1000) as f64;
        let mean = sum / cells;
        assert!(mean.abs() < 4.0 * sigma / libm::sqrt(cells), "mean {mean}");
    }

    #[test]
    fn same_seed_same_matrix() {
        let p = plan(0.25 * DELTA, 20);
        assert_eq!(synthesize(&p).unwrap(), synthesize(&p).unwrap());
    }

    #[test]
    fn records_are_independent_of_generation_order() {
        let p = plan(0.25 * DELTA, 6);
        let s = p.stimulus.render();
        let full = synthesize(&p).unwrap();
        let alone = synthesize_record(&s, &p.noise, 4);
        assert_eq!(full.record(4), &alone[..]);
    }

    #[test]
    fn lag_one_autocorrelation_small() {
        let p = plan(1.0, 200);
        let s = p.stimulus.render();
        let x = synthesize(&p).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for r in 0..200 {
            for n in 0..151 {
                let e = x.get(n, r) - s[n];
                den += e * e;
                if n + 1 < 151 {
                    num += e * (x.get(n + 1, r) - s[n + 1]);
                }
            }
        }
        let rho = num / den;
        assert!(rho.abs() < 5.0 / libm::sqrt((151 * 200) as f64), "rho {rho}");
    }

    fn ks_statistic(mut v: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
            let f = cdf(x);
            d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
    }

    #[test]
    fn noise_families_pass_ks() {
        // 1% critical value 1.628 / sqrt(n)
        let n = 100_000;
        let crit = 1.628 / libm::sqrt(n as f64);
        for family in [NoiseFamily::Gaussian, NoiseFamily::Uniform, NoiseFamily::Laplace] {
            let noise = NoiseModel { family, location: 0.3, scale: 1.7, seed: 5 };
            let mut rng = noise.record_rng(0);
            let v: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
            let d = ks_statistic(v, |x| noise.cdf(x));
            assert!(d < crit, "{family:?}: D = {d}");
        }
    }
}
