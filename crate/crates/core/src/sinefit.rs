//! Three-parameter sine fit at known frequency.
//!
//! Each record is regressed on `H = [sin(2πλn/N), cos(2πλn/N), 1]`; the
//! per-record parameters are averaged over records and converted to
//! amplitude, phase and offset. With the model `A sin(ωn + φ0) + C`, the
//! first two parameters are `A cos φ0` and `A sin φ0`, so
//! `φ0 = atan2(θ2, θ1)`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stimulus::{render_sine, Matrix};

/// Rows `[sin(2πλn/N), cos(2πλn/N), 1]`, `n = 0..N-1`.
pub fn design_matrix(periods: u32, samples: usize) -> Vec<[f64; 3]> {
    let lambda = periods as f64;
    let n_total = samples as f64;
    (0..samples)
        .map(|n| {
            let arg = 2.0 * PI * lambda * n as f64 / n_total;
            [libm::sin(arg), libm::cos(arg), 1.0]
        })
        .collect()
}

/// Householder QR of an `N × 3` matrix, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct LeastSquares3 {
    rows: usize,
    // reflector vectors, column-major, each of length `rows`
    reflectors: [Vec<f64>; 3],
    r: [[f64; 3]; 3],
}

impl LeastSquares3 {
    pub fn new(h: &[[f64; 3]]) -> Result<Self> {
        let m = h.len();
        if m < 3 {
            return Err(Error::Fit(format!("need at least 3 rows, got {m}")));
        }
        let mut a: [Vec<f64>; 3] = core::array::from_fn(|c| h.iter().map(|row| row[c]).collect());
        let scale = a
            .iter()
            .map(|col| libm::sqrt(col.iter().map(|v| v * v).sum::<f64>()))
            .fold(0.0f64, f64::max);
        let mut reflectors: [Vec<f64>; 3] = Default::default();
        let mut r = [[0.0; 3]; 3];
        for c in 0..3 {
            let norm = libm::sqrt(a[c][c..].iter().map(|v| v * v).sum::<f64>());
            if norm <= scale * 1e-10 {
                return Err(Error::Fit(format!(
                    "design matrix is rank deficient (column {c})"
                )));
            }
            let alpha = if a[c][c] > 0.0 { -norm } else { norm };
            let mut v = a[c].clone();
            for x in v.iter_mut().take(c) {
                *x = 0.0;
            }
            v[c] -= alpha;
            let vnorm2: f64 = v[c..].iter().map(|x| x * x).sum();
            for col in a.iter_mut().skip(c) {
                let dot: f64 = v[c..].iter().zip(&col[c..]).map(|(p, q)| p * q).sum();
                let f = 2.0 * dot / vnorm2;
                for i in c..m {
                    col[i] -= f * v[i];
                }
            }
            for (j, col) in a.iter().enumerate().skip(c) {
                r[c][j] = col[c];
            }
            reflectors[c] = v;
        }
        Ok(Self { rows: m, reflectors, r })
    }

    /// Solves `min ||y - Hθ||` for one right-hand side.
    pub fn solve(&self, y: &[f64]) -> [f64; 3] {
        assert_eq!(y.len(), self.rows, "rhs length mismatch");
        let mut b = y.to_vec();
        for (c, v) in self.reflectors.iter().enumerate() {
            let vnorm2: f64 = v[c..].iter().map(|x| x * x).sum();
            let dot: f64 = v[c..].iter().zip(&b[c..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for i in c..self.rows {
                b[i] -= f * v[i];
            }
        }
        let mut theta = [0.0; 3];
        for i in (0..3).rev() {
            let mut acc = b[i];
            for j in i + 1..3 {
                acc -= self.r[i][j] * theta[j];
            }
            theta[i] = acc / self.r[i][i];
        }
        theta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SineFitResult {
    pub per_record: Vec<[f64; 3]>,
    pub mean: [f64; 3],
    pub amplitude: f64,
    /// In `(-π, π]`.
    pub phase: f64,
    pub periods: u32,
    /// `Â sin(2πλn/N + φ̂0) + θ̄3`.
    pub reconstructed: Vec<f64>,
}

impl SineFitResult {
    pub fn offset(&self) -> f64 {
        self.mean[2]
    }
}

/// Fits every record of an `N × R` voltage matrix at `periods` cycles per record.
pub fn fit_records(voltages: &Matrix<f64>, periods: u32) -> Result<SineFitResult> {
    let samples = voltages.samples();
    if samples < 3 {
        return Err(Error::Fit(format!("need N >= 3 samples, got {samples}")));
    }
    if voltages.records() == 0 {
        return Err(Error::Fit("no records to fit".into()));
    }
    let ls = LeastSquares3::new(&design_matrix(periods, samples))?;
    let per_record: Vec<[f64; 3]> =
        (0..voltages.records()).map(|r| ls.solve(voltages.record(r))).collect();
    Ok(summarize(per_record, periods, samples))
}

/// Averages per-record parameter triples and reconstructs the sequence.
pub fn summarize(per_record: Vec<[f64; 3]>, periods: u32, samples: usize) -> SineFitResult {
    let count = per_record.len() as f64;
    let mut mean = [0.0; 3];
    for th in &per_record {
        for i in 0..3 {
            mean[i] += th[i];
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    let amplitude = libm::hypot(mean[0], mean[1]);
    let mut phase = libm::atan2(mean[1], mean[0]);
    if phase <= -PI {
        phase += 2.0 * PI;
    }
    let reconstructed = render_sine(amplitude, periods, samples, phase, mean[2]);
    SineFitResult { per_record, mean, amplitude, phase, periods, reconstructed }
}
