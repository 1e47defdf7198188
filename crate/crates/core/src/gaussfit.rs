//! Gaussian CDF fit to sampled CDF points by Levenberg–Marquardt.
//!
//! Minimises `Σ w_j (F̂_j - Φ((x_j - μ) / σ))²` over `(μ, ln σ)`; the log
//! parameterisation keeps `σ > 0` without constraints.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimator::{CdfEstimate, CdfInterpolant};
use crate::isotonic;
use crate::normal::{self, GaussianParams};

pub const DEFAULT_MAX_ITERATIONS: usize = 200;
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    None,
    /// `w_j = R L_j / (F̃(1 - F̃))` with `F̃ = (m + 1/2) / (R L_j + 1)`, which
    /// stays finite at `F̂ ∈ {0, 1}`.
    InverseVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub weighting: Weighting,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::None,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            relative_tolerance: DEFAULT_RELATIVE_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCdfFit {
    pub mean: f64,
    pub sigma: f64,
    /// `max_j |F̂_j - Φ((x_j - μ̂)/σ̂)|`, unweighted.
    pub max_residual: f64,
    /// Unweighted RMS residual.
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Initial guess from the quantile construction.
    pub initial: GaussianParams,
    /// Weighted objective after every accepted step, starting at the initial guess.
    pub objective_trace: Vec<f64>,
}

impl GaussianCdfFit {
    pub fn params(&self) -> GaussianParams {
        GaussianParams { mean: self.mean, sigma: self.sigma }
    }
}

/// Fits the estimate's points; see [`fit_gaussian_points`].
pub fn fit_gaussian_cdf(est: &CdfEstimate, weighting: Weighting) -> Result<GaussianCdfFit> {
    let opts = FitOptions { weighting, ..FitOptions::default() };
    let xs = est.xs();
    let fs = est.fs();
    let trials: Vec<f64> = est.points.iter().map(|p| p.trials as f64).collect();
    let weights: Vec<f64> = match weighting {
        Weighting::None => alloc::vec![1.0; xs.len()],
        Weighting::InverseVariance => est
            .points
            .iter()
            .map(|p| {
                let n = p.trials as f64;
                let f = (p.hits as f64 + 0.5) / (n + 1.0);
                n / (f * (1.0 - f))
            })
            .collect(),
    };
    fit_gaussian_points(&xs, &fs, &weights, &trials, &opts)
}

/// Weighted fit of arbitrary `(x_j, F_j)` points.
///
/// `pava_weights` are only used to build the monotone curve from which the
/// initial guess is read: `μ0 = x(F = 0.5)`, `σ0 = (x(0.841) - x(0.159)) / 2`.
pub fn fit_gaussian_points(
    xs: &[f64],
    fs: &[f64],
    weights: &[f64],
    pava_weights: &[f64],
    opts: &FitOptions,
) -> Result<GaussianCdfFit> {
    let len = xs.len();
    if len < 3 {
        return Err(Error::Fit(format!("need at least 3 points, have {len}")));
    }
    if fs.len() != len || weights.len() != len || pava_weights.len() != len {
        return Err(Error::Fit("point, value and weight lengths differ".into()));
    }
    if fs.iter().all(|&f| f == fs[0]) {
        return Err(Error::Fit("all CDF values are equal".into()));
    }
    if fs.iter().all(|&f| f == 0.0 || f == 1.0) {
        return Err(Error::Fit("all CDF values are 0 or 1; no transition region to fit".into()));
    }

    let initial = initial_guess(xs, fs, pava_weights);
    let sqrt_w: Vec<f64> = weights.iter().map(|w| libm::sqrt(*w)).collect();

    let mut params = [initial.mean, libm::log(initial.sigma)];
    let mut cost = objective(xs, fs, &sqrt_w, params);
    let mut trace = alloc::vec![cost];
    let mut damping = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let (jtj, jtr) = normal_equations(xs, fs, &sqrt_w, params);
        if jtr[0] == 0.0 && jtr[1] == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        loop {
            let a = [
                [jtj[0][0] * (1.0 + damping), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + damping)],
            ];
            let Some(step) = solve2(a, [-jtr[0], -jtr[1]]) else {
                damping *= 10.0;
                if damping > 1e30 {
                    break;
                }
                continue;
            };
            let sigma = libm::exp(params[1]);
            let small = step[0].abs() <= opts.relative_tolerance * (params[0].abs() + sigma)
                && step[1].abs() <= opts.relative_tolerance;
            let trial = [params[0] + step[0], params[1] + step[1]];
            let trial_cost = objective(xs, fs, &sqrt_w, trial);
            if trial_cost <= cost {
                params = trial;
                cost = trial_cost;
                trace.push(cost);
                damping = (damping / 10.0).max(1e-12);
                accepted = true;
            } else {
                damping *= 10.0;
            }
            if small {
                converged = true;
                break;
            }
            if accepted || damping > 1e30 {
                break;
            }
        }
        if converged || !accepted {
            break;
        }
    }

    let mean = params[0];
    let sigma = libm::exp(params[1]);
    let (max_residual, sum_sq) = xs.iter().zip(fs).fold((0.0f64, 0.0), |(mx, ss), (&x, &f)| {
        let r = f - normal::cdf((x - mean) / sigma);
        (mx.max(r.abs()), ss + r * r)
    });
    Ok(GaussianCdfFit {
        mean,
        sigma,
        max_residual,
        rms_residual: libm::sqrt(sum_sq / len as f64),
        iterations,
        converged,
        initial,
        objective_trace: trace,
    })
}

/// Residuals `r_j = √w_j (F_j - Φ(z_j))` and their Jacobian with respect to
/// `(μ, ln σ)`.
pub fn residuals_and_jacobian(
    xs: &[f64],
    fs: &[f64],
    sqrt_w: &[f64],
    mean: f64,
    log_sigma: f64,
) -> (Vec<f64>, Vec<[f64; 2]>) {
    let sigma = libm::exp(log_sigma);
    xs.iter()
        .zip(fs)
        .zip(sqrt_w)
        .map(|((&x, &f), &sw)| {
            let z = (x - mean) / sigma;
            let phi = normal::pdf(z);
            (sw * (f - normal::cdf(z)), [sw * phi / sigma, sw * phi * z])
        })
        .unzip()
}

/// Weighted sum of squared residuals.
pub fn objective(xs: &[f64], fs: &[f64], sqrt_w: &[f64], params: [f64; 2]) -> f64 {
    let sigma = libm::exp(params[1]);
    xs.iter()
        .zip(fs)
        .zip(sqrt_w)
        .map(|((&x, &f), &sw)| {
            let r = sw * (f - normal::cdf((x - params[0]) / sigma));
            r * r
        })
        .sum()
}

fn normal_equations(
    xs: &[f64],
    fs: &[f64],
    sqrt_w: &[f64],
    params: [f64; 2],
) -> ([[f64; 2]; 2], [f64; 2]) {
    let (res, jac) = residuals_and_jacobian(xs, fs, sqrt_w, params[0], params[1]);
    let mut jtj = [[0.0; 2]; 2];
    let mut jtr = [0.0; 2];
    for (r, j) in res.iter().zip(&jac) {
        for a in 0..2 {
            jtr[a] += j[a] * r;
            for b in 0..2 {
                jtj[a][b] += j[a] * j[b];
            }
        }
    }
    (jtj, jtr)
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a[0][0].abs() * a[1][1].abs();
    if !(det.is_finite() && det.abs() > scale * 1e-300 && det != 0.0) {
        return None;
    }
    Some([(b[0] * a[1][1] - a[0][1] * b[1]) / det, (a[0][0] * b[1] - a[1][0] * b[0]) / det])
}

fn initial_guess(xs: &[f64], fs: &[f64], pava_weights: &[f64]) -> GaussianParams {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let sx: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let sf: Vec<f64> = order.iter().map(|&i| fs[i]).collect();
    let sw: Vec<f64> = order.iter().map(|&i| pava_weights[i]).collect();
    let curve = CdfInterpolant::from_parts(sx.clone(), isotonic::pava(&sf, &sw));
    let mean = curve.quantile(0.5);
    let mut sigma = 0.5 * (curve.quantile(0.841) - curve.quantile(0.159));
    if !(sigma > 0.0) {
        // step-like data: fall back to the smallest point spacing
        let spacing = sx
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min);
        sigma = if spacing.is_finite() { spacing } else { 1.0 };
    }
    GaussianParams { mean, sigma }
}
