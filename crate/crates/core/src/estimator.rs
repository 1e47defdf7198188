//! Sampled noise-CDF estimate from quantized records.
//!
//! For each partition group `S_j`,
//!
//! ```text
//! F̂(x_j) = 1 / (R L_j) · Σ_{(n,k) ∈ S_j} Σ_r [ y(n, r) <= k ]
//! ```
//!
//! which is a binomial proportion with `R L_j` trials, unbiased for `F(x_j)`
//! with variance `F(1 - F) / (R L_j)` when `T_k` and `s_n` are known.

use alloc::format;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::isotonic;
use crate::normal::GaussianParams;
use crate::partition::PartitionTable;
use crate::records::{CodeRecords, CumulativeCounts};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfPoint {
    pub x: f64,
    pub f: f64,
    /// Plug-in variance `F̂(1 - F̂) / (R L_j)`.
    pub var: f64,
    /// `L_j`.
    pub group_size: usize,
    /// Indicator hits `m`, so that `f = m / trials` exactly.
    pub hits: u64,
    /// `R L_j`.
    pub trials: u64,
}

impl CdfPoint {
    /// Plug-in variance is zero because `F̂ ∈ {0, 1}`.
    pub fn is_degenerate(&self) -> bool {
        self.hits == 0 || self.hits == self.trials
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdfEstimate {
    pub points: Vec<CdfPoint>,
    pub records: u64,
    pub tolerance: f64,
    pub k_range: RangeInclusive<usize>,
    /// Parametric model attached after fitting, used for analytic PDFs.
    pub fit: Option<GaussianParams>,
}

impl CdfEstimate {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn fs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.f).collect()
    }

    /// Piecewise-linear interpolant through the points, optionally after an
    /// isotonic (PAVA) correction weighted by the number of trials.
    pub fn interpolant(&self, monotone: bool) -> Result<CdfInterpolant> {
        if self.points.len() < 2 {
            return Err(Error::Estimation(format!(
                "interpolation needs at least 2 points, have {}",
                self.points.len()
            )));
        }
        let xs = self.xs();
        let fs = if monotone {
            let w: Vec<f64> = self.points.iter().map(|p| p.trials as f64).collect();
            isotonic::pava(&self.fs(), &w)
        } else {
            self.fs()
        };
        Ok(CdfInterpolant { xs, fs })
    }
}

/// `F(1 - F) / (R L_j)`.
pub fn theoretical_variance(f: f64, records: u64, group_size: usize) -> f64 {
    f * (1.0 - f) / (records as f64 * group_size as f64)
}

/// Estimate from code records; see [`estimate_cdf_from_counts`].
pub fn estimate_cdf(records: &CodeRecords, part: &PartitionTable) -> Result<CdfEstimate> {
    estimate_cdf_from_counts(&CumulativeCounts::from_records(records), part)
}

/// Estimate from per-sample cumulative counts.
///
/// Counts and partition must carry the same quantizer and stimulus
/// fingerprints; mixing acquisitions is a hard error.
pub fn estimate_cdf_from_counts(
    counts: &CumulativeCounts,
    part: &PartitionTable,
) -> Result<CdfEstimate> {
    if !counts.is_finished() {
        return Err(Error::Estimation("cumulative counts not finished".into()));
    }
    if counts.samples() != part.samples() || counts.code_count() != part.code_count() {
        return Err(Error::Estimation(format!(
            "records are {} samples x {} codes, partition expects {} x {}",
            counts.samples(),
            counts.code_count(),
            part.samples(),
            part.code_count()
        )));
    }
    if counts.quantizer_fingerprint() != part.quantizer_fingerprint() {
        return Err(Error::Estimation(format!(
            "quantizer mismatch: records {} vs partition {}",
            counts.quantizer_fingerprint(),
            part.quantizer_fingerprint()
        )));
    }
    if counts.stimulus_fingerprint() != part.stimulus_fingerprint() {
        return Err(Error::Estimation(format!(
            "stimulus mismatch: records {} vs partition {}",
            counts.stimulus_fingerprint(),
            part.stimulus_fingerprint()
        )));
    }
    let r = counts.records();
    if r == 0 {
        return Err(Error::Estimation("no records".into()));
    }
    let points = part
        .groups()
        .iter()
        .map(|g| {
            let hits: u64 = g
                .members
                .iter()
                .map(|&(n, k)| counts.at_or_below(n as usize, k as usize))
                .sum();
            let trials = r * g.len() as u64;
            let f = hits as f64 / trials as f64;
            CdfPoint {
                x: g.abscissa,
                f,
                var: theoretical_variance(f, r, g.len()),
                group_size: g.len(),
                hits,
                trials,
            }
        })
        .collect();
    Ok(CdfEstimate {
        points,
        records: r,
        tolerance: part.tolerance(),
        k_range: part.k_range(),
        fit: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdfInterpolant {
    xs: Vec<f64>,
    fs: Vec<f64>,
}

impl CdfInterpolant {
    pub(crate) fn from_parts(xs: Vec<f64>, fs: Vec<f64>) -> Self {
        Self { xs, fs }
    }

    /// Linear between neighbouring points, constant beyond the ends.
    pub fn eval(&self, x: f64) -> f64 {
        let last = self.xs.len() - 1;
        if x <= self.xs[0] {
            return self.fs[0];
        }
        if x >= self.xs[last] {
            return self.fs[last];
        }
        let i = self.xs.partition_point(|&v| v <= x);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let (f0, f1) = (self.fs[i - 1], self.fs[i]);
        f0 + (f1 - f0) * (x - x0) / (x1 - x0)
    }

    /// Smallest `x` with interpolated value `>= p`; requires non-decreasing values.
    pub fn quantile(&self, p: f64) -> f64 {
        let j = self.fs.partition_point(|&f| f < p);
        if j == 0 {
            return self.xs[0];
        }
        if j == self.fs.len() {
            return self.xs[self.xs.len() - 1];
        }
        let (f0, f1) = (self.fs[j - 1], self.fs[j]);
        self.xs[j - 1] + (p - f0) / (f1 - f0) * (self.xs[j] - self.xs[j - 1])
    }

    pub fn values(&self) -> &[f64] {
        &self.fs
    }
}

/// Interpolated CDF at `x`.
pub fn interpolate_cdf(est: &CdfEstimate, x: f64, monotone: bool) -> Result<f64> {
    Ok(est.interpolant(monotone)?.eval(x))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PdfMethod {
    /// Density of the attached Gaussian fit at the given abscissas.
    AnalyticFromFit(Vec<f64>),
    /// `(F̂_{j+w} - F̂_{j-w}) / (x_{j+w} - x_{j-w})` at interior points.
    CentralDifference { window: usize },
}

/// Density estimate as `(x, density)` pairs.
pub fn pdf_from_cdf(est: &CdfEstimate, method: &PdfMethod) -> Result<Vec<(f64, f64)>> {
    match method {
        PdfMethod::AnalyticFromFit(at) => {
            let fit = est
                .fit
                .ok_or_else(|| Error::Estimation("analytic PDF needs an attached fit".into()))?;
            Ok(at.iter().map(|&x| (x, fit.pdf(x))).collect())
        }
        PdfMethod::CentralDifference { window } => {
            let w = *window;
            let len = est.points.len();
            if len < 3 {
                return Err(Error::Estimation("numeric PDF needs at least 3 points".into()));
            }
            if w == 0 || 2 * w + 1 > len {
                return Err(Error::Estimation(format!(
                    "window {w} too large for {len} points"
                )));
            }
            let p = &est.points;
            Ok((w..len - w)
                .map(|j| {
                    let (a, b) = (&p[j - w], &p[j + w]);
                    (p[j].x, (b.f - a.f) / (b.x - a.x))
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBounds {
    pub delta_eps: f64,
    /// `(x_j, F̂(x_j - Δε))`.
    pub lower: Vec<(f64, f64)>,
    /// `(x_j, F̂(x_j + Δε))`.
    pub upper: Vec<(f64, f64)>,
}

/// Band `F̂(x_j ∓ Δε)` around the estimate, from the isotonic interpolant so
/// that `lower <= upper` holds pointwise.
pub fn bound_curves(est: &CdfEstimate, delta_eps: f64) -> Result<ErrorBounds> {
    if !(delta_eps >= 0.0 && delta_eps.is_finite()) {
        return Err(Error::Estimation(format!("Δε must be >= 0, got {delta_eps}")));
    }
    let interp = est.interpolant(true)?;
    let lower = est.points.iter().map(|p| (p.x, interp.eval(p.x - delta_eps))).collect();
    let upper = est.points.iter().map(|p| (p.x, interp.eval(p.x + delta_eps))).collect();
    Ok(ErrorBounds { delta_eps, lower, upper })
}

/// `max |x̂_j - x_j|` over all pooled pairs: the abscissa error caused by
/// using `(q_hat, s_hat)` in place of the true `(q, s)`.
pub fn abscissa_error_bound(
    q: &crate::quantizer::QuantizerModel,
    s: &[f64],
    q_hat: &crate::quantizer::QuantizerModel,
    s_hat: &[f64],
    k_range: RangeInclusive<usize>,
) -> f64 {
    let mut worst = 0.0f64;
    for (sn, sn_hat) in s.iter().zip(s_hat) {
        for k in k_range.clone() {
            let err = (q_hat.transition(k) - sn_hat) - (q.transition(k) - sn);
            worst = worst.max(err.abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    use crate::partition::build_partition;
    use crate::quantizer::QuantizerModel;
    use crate::records::acquire_record;
    use crate::stimulus::{Matrix, NoiseFamily, NoiseModel};

    fn point(x: f64, f: f64) -> CdfPoint {
        CdfPoint { x, f, var: 0.0, group_size: 1, hits: 0, trials: 1 }
    }

    fn est(points: Vec<CdfPoint>) -> CdfEstimate {
        CdfEstimate { points, records: 1, tolerance: 0.0, k_range: 1..=1, fit: None }
    }

    #[test]
    fn single_group_indicator_count() {
        // T_1 = 0 is the only usable threshold; s_0 = 0
        let q = QuantizerModel::new(vec![-1.0, 0.0, 1.0, 2.0]).unwrap();
        let s = [0.0];
        let codes = Matrix::from_records(1, 4, vec![1, 2, 1, 3]).unwrap();
        let rec = CodeRecords::new(codes, &q, &s).unwrap();
        let part = crate::partition::build_partition_in_range(&q, &s, 0.0, 1..=1).unwrap();
        let e = estimate_cdf(&rec, &part).unwrap();
        assert_eq!(e.points.len(), 1);
        assert_eq!(e.points[0].f, 0.5);
        assert_eq!(e.points[0].hits, 2);
        assert_eq!(e.points[0].var, 0.0625);
    }

    #[test]
    fn symmetric_uniform_noise_at_threshold() {
        let q = QuantizerModel::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let s = [0.0];
        let noise = NoiseModel { family: NoiseFamily::Uniform, location: 0.0, scale: 0.5, seed: 1 };
        let mut counts = CumulativeCounts::new(&q, &s);
        for r in 0..100_000 {
            counts.add_record(&acquire_record(&q, &s, &noise, r));
        }
        counts.finish();
        let part = build_partition(&q, &s, 0.0).unwrap();
        let e = estimate_cdf_from_counts(&counts, &part).unwrap();
        assert_eq!(e.points[0].x, 0.0);
        assert!((e.points[0].f - 0.5).abs() < 0.006, "{}", e.points[0].f);
    }

    #[test]
    fn fingerprint_mismatch_is_fatal() {
        let q = QuantizerModel::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let codes = Matrix::from_records(1, 2, vec![1, 2]).unwrap();
        let rec = CodeRecords::new(codes, &q, &[0.0]).unwrap();
        let other_s = build_partition(&q, &[0.1], 0.0).unwrap();
        assert!(matches!(estimate_cdf(&rec, &other_s), Err(Error::Estimation(_))));
        let q2 = QuantizerModel::new(vec![-1.0, 0.01, 1.0]).unwrap();
        let other_q = build_partition(&q2, &[0.0], 0.0).unwrap();
        assert!(matches!(estimate_cdf(&rec, &other_q), Err(Error::Estimation(_))));
        let bigger = build_partition(&q, &[0.0, 0.0], 0.0).unwrap();
        assert!(estimate_cdf(&rec, &bigger).is_err());
        // explicit re-tagging is how estimated inputs are accepted
        let rec = rec.assume_inputs(&q, &[0.1]).unwrap();
        assert!(estimate_cdf(&rec, &other_s).is_ok());
    }

    #[test]
    fn variance_values() {
        assert!((theoretical_variance(0.5, 1000, 1) - 2.5e-4).abs() < 1e-18);
        assert_eq!(theoretical_variance(0.0, 1000, 3), 0.0);
        assert_eq!(theoretical_variance(1.0, 1000, 3), 0.0);
        assert!((theoretical_variance(0.5, 1000, 2) - 1.25e-4).abs() < 1e-18);
    }

    #[test]
    fn linear_interpolation_and_extension() {
        let e = est(vec![point(0.0, 0.4), point(1.0, 0.6)]);
        assert!((interpolate_cdf(&e, 0.5, false).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(interpolate_cdf(&e, -3.0, false).unwrap(), 0.4);
        assert_eq!(interpolate_cdf(&e, 7.0, false).unwrap(), 0.6);
        assert!(interpolate_cdf(&est(vec![point(0.0, 0.4)]), 0.0, false).is_err());
    }

    #[test]
    fn monotone_prepass() {
        let e = est(vec![point(0.0, 0.50), point(1.0, 0.49), point(2.0, 0.60)]);
        let it = e.interpolant(true).unwrap();
        let v = it.values();
        assert!((v[0] - 0.495).abs() < 1e-15 && (v[1] - 0.495).abs() < 1e-15);
        assert_eq!(v[2], 0.60);
        assert!((it.eval(1.5) - 0.5475).abs() < 1e-15);
    }

    #[test]
    fn analytic_pdf_peak() {
        let mut e = est(vec![point(0.0, 0.5), point(1.0, 0.6)]);
        assert!(pdf_from_cdf(&e, &PdfMethod::AnalyticFromFit(vec![0.0])).is_err());
        let sigma = 0.3;
        e.fit = Some(GaussianParams { mean: 0.0, sigma });
        let d = pdf_from_cdf(&e, &PdfMethod::AnalyticFromFit(vec![0.0])).unwrap();
        let peak = 1.0 / (sigma * libm::sqrt(2.0 * core::f64::consts::PI));
        assert!((d[0].1 - peak).abs() < 1e-14);
    }

    #[test]
    fn numeric_pdf_of_uniform() {
        let e = est((0..=10).map(|i| point(i as f64 / 10.0, i as f64 / 10.0)).collect());
        let d = pdf_from_cdf(&e, &PdfMethod::CentralDifference { window: 2 }).unwrap();
        assert_eq!(d.len(), 7);
        assert!(d.iter().all(|&(_, v)| (v - 1.0).abs() < 1e-12));
        assert!(pdf_from_cdf(&e, &PdfMethod::CentralDifference { window: 6 }).is_err());
        assert!(pdf_from_cdf(&e, &PdfMethod::CentralDifference { window: 0 }).is_err());
    }

    #[test]
    fn zero_width_band() {
        let e = est(vec![point(0.0, 0.1), point(1.0, 0.4), point(2.0, 0.9)]);
        let b = bound_curves(&e, 0.0).unwrap();
        for (i, p) in e.points.iter().enumerate() {
            assert_eq!(b.lower[i].1, p.f);
            assert_eq!(b.upper[i].1, p.f);
        }
    }

    #[test]
    fn band_brackets_monotone_estimate() {
        let e = est((0..20).map(|i| point(i as f64, (i as f64 / 19.0).powi(2))).collect());
        let b = bound_curves(&e, 0.7).unwrap();
        for (i, p) in e.points.iter().enumerate() {
            assert!(b.lower[i].1 <= p.f && p.f <= b.upper[i].1);
        }
        assert!(bound_curves(&e, -1.0).is_err());
    }

    #[test]
    fn abscissa_error_is_stimulus_error_for_known_transitions() {
        let q = QuantizerModel::uniform(3, -1.0, 1.0).unwrap();
        let s = [0.0, 0.1, -0.2];
        let s_hat = [0.01, 0.07, -0.2];
        let d = abscissa_error_bound(&q, &s, &q, &s_hat, 1..=7);
        assert!((d - 0.03).abs() < 1e-15);
    }
}
