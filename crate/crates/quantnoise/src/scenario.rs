//! End-to-end scenario pipeline.
//!
//! acquire → (sine fit) → partition → estimate → (bounds) → Gaussian fit → PDF.
//! Records are generated in a bounded number of chunks on the current rayon pool;
//! chunk results are integer histograms and ordered parameter lists, so the
//! outcome does not depend on the number of worker threads.

use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use quantnoise_core::estimator::{
    abscissa_error_bound, bound_curves, estimate_cdf_from_counts, pdf_from_cdf, CdfEstimate,
    ErrorBounds, PdfMethod,
};
use quantnoise_core::gaussfit::{fit_gaussian_cdf, GaussianCdfFit};
use quantnoise_core::partition::{build_partition_in_range, default_tolerance, PartitionTable};
use quantnoise_core::records::{acquire_record, CumulativeCounts};
use quantnoise_core::rng::derive_seed;
use quantnoise_core::servoloop::{
    fit_line, servoloop, CalibrationResult, SimulatedDevice, TransitionEstimate,
};
use quantnoise_core::sinefit::{design_matrix, summarize, LeastSquares3, SineFitResult};
use quantnoise_core::{NoiseModel, QuantizerModel};
use rayon::prelude::*;

use crate::config::{DeltaEpsMode, Mode, ScenarioConfig, TransitionSource};
use crate::error::{Error, Result, Stage, StageExt};
use crate::formats::{self, ArtifactSet, Summary};

/// Upper bound on work units per acquisition; each holds an `N × (K+1)` histogram.
const MAX_CHUNKS: usize = 64;

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub config: ScenarioConfig,
    pub delta: f64,
    pub true_quantizer: QuantizerModel,
    /// Transition levels the estimator was given.
    pub quantizer_used: QuantizerModel,
    pub stimulus_true: Vec<f64>,
    /// Stimulus the estimator was given (the sine-fit reconstruction in
    /// `sinefit-s` mode).
    pub stimulus_used: Vec<f64>,
    pub noise: NoiseModel,
    pub calibration: Option<CalibrationResult>,
    pub sinefit: Option<SineFitResult>,
    pub partition: PartitionTable,
    pub estimate: CdfEstimate,
    pub fit: GaussianCdfFit,
    pub delta_eps: Option<f64>,
    pub bounds: Option<ErrorBounds>,
    pub pdf: Vec<(f64, f64)>,
}

impl ScenarioOutcome {
    /// Description of every unconverged step, if any.
    pub fn non_convergence(&self) -> Option<(Stage, String)> {
        if let Some(cal) = &self.calibration {
            if !cal.all_converged() {
                let bad: Vec<String> = cal
                    .entries
                    .iter()
                    .filter(|e| !e.converged)
                    .map(|e| e.k.to_string())
                    .chain(cal.failures.iter().map(|(k, _)| k.to_string()))
                    .collect();
                return Some((Stage::Calibration, format!("transitions {}", bad.join(","))));
            }
        }
        if !self.fit.converged {
            return Some((
                Stage::GaussianFit,
                format!("stopped after {} iterations", self.fit.iterations),
            ));
        }
        None
    }

    pub fn summary(&self) -> Summary {
        let d = self.delta;
        let mut s = Summary::default();
        s.put("scenario", &self.config.scenario);
        s.put("seed", self.config.seed);
        s.put("records", self.config.records);
        s.put("samples", self.stimulus_true.len());
        s.put("code_count", self.true_quantizer.code_count());
        s.put_num("delta", d);
        s.put("k_min", self.partition.k_range().start());
        s.put("k_max", self.partition.k_range().end());
        s.put_num("tolerance", self.partition.tolerance());
        s.put("groups", self.partition.len());
        s.put("pairs", self.partition.pair_count());
        s.put_num("mu_hat", self.fit.mean);
        s.put_num("sigma_hat", self.fit.sigma);
        s.put_num("mu_hat_lsb", self.fit.mean / d);
        s.put_num("sigma_hat_lsb", self.fit.sigma / d);
        s.put_num("max_residual", self.fit.max_residual);
        s.put_num("rms_residual", self.fit.rms_residual);
        s.put("fit_iterations", self.fit.iterations);
        s.put("fit_converged", self.fit.converged);
        match self.delta_eps {
            Some(e) => {
                s.put_num("delta_eps", e);
                s.put_num("delta_eps_lsb", e / d);
            }
            None => s.put("delta_eps", "none"),
        }
        s.put_num("noise_location", self.noise.location);
        s.put_num("noise_scale", self.noise.scale);
        if let Some(f) = &self.sinefit {
            s.put_num("A_hat", f.amplitude);
            s.put_num("phi0_hat", f.phase);
            s.put_num("offset_hat", f.offset());
        }
        if let Some(c) = &self.calibration {
            s.put("calibrated_codes", c.entries.len());
            s.put("calibration_failures", c.failures.len());
            if let Some(line) = c.line {
                s.put_num("calibration_gain", line.gain);
                s.put_num("calibration_offset", line.offset);
                s.put_num("calibration_max_deviation", line.max_deviation);
            }
        }
        s.put("converged", self.non_convergence().is_none());
        s
    }
}

/// Thresholds whose nominal level lies within `margin` of the stimulus range.
pub fn threshold_range(
    q: &QuantizerModel,
    s: &[f64],
    margin: Option<f64>,
) -> Result<RangeInclusive<usize>> {
    let last = q.code_count() - 1;
    let Some(m) = margin else { return Ok(1..=last) };
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min) - m;
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max) + m;
    let ks: Vec<usize> = (1..=last).filter(|&k| (lo..=hi).contains(&q.transition(k))).collect();
    match (ks.first(), ks.last()) {
        (Some(&a), Some(&b)) => Ok(a..=b),
        _ => Err(Error::Stage {
            stage: Stage::Partition,
            source: quantnoise_core::Error::Partition(format!(
                "no transition lies within [{lo}, {hi}]"
            )),
        }),
    }
}

/// Servoloop calibration of `codes`, each on its own device stream.
pub fn calibrate(
    device: &SimulatedDevice,
    cfg: &quantnoise_core::ServoloopConfig,
    codes: &[usize],
    start: &QuantizerModel,
) -> Result<CalibrationResult> {
    cfg.validate().stage(Stage::Calibration)?;
    let runs: Vec<(usize, quantnoise_core::Result<TransitionEstimate>)> = codes
        .par_iter()
        .map(|&k| {
            let mut dev = device.fork(k as u64);
            (k, servoloop(&mut dev, cfg, k, start.transition(k)))
        })
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in runs {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => failures.push((k, e)),
        }
    }
    let line = fit_line(&entries);
    Ok(CalibrationResult { entries, failures, line })
}

struct Acquisition {
    counts: CumulativeCounts,
    thetas: Vec<[f64; 3]>,
}

fn acquire(
    q: &QuantizerModel,
    s: &[f64],
    noise: &NoiseModel,
    records: usize,
    ls: Option<(&LeastSquares3, &QuantizerModel)>,
) -> Result<Acquisition> {
    let chunk = records.div_ceil(MAX_CHUNKS).max(1);
    let chunks = records.div_ceil(chunk);
    let parts: Vec<(CumulativeCounts, Vec<[f64; 3]>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = CumulativeCounts::new(q, s);
            let mut thetas = Vec::new();
            let mut volts = vec![0.0; s.len()];
            for r in c * chunk..((c + 1) * chunk).min(records) {
                let codes = acquire_record(q, s, noise, r);
                counts.add_record(&codes);
                if let Some((ls, qv)) = ls {
                    for (v, &code) in volts.iter_mut().zip(&codes) {
                        *v = qv.code_voltage(code);
                    }
                    thetas.push(ls.solve(&volts));
                }
            }
            (counts, thetas)
        })
        .collect();
    let mut counts = CumulativeCounts::new(q, s);
    let mut thetas = Vec::with_capacity(if ls.is_some() { records } else { 0 });
    for (c, t) in parts {
        counts.merge(&c).stage(Stage::Synthesis)?;
        thetas.extend(t);
    }
    counts.finish();
    Ok(Acquisition { counts, thetas })
}

/// Runs the whole pipeline in memory on the current rayon pool.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let delta = cfg.delta();
    let true_q = cfg.true_quantizer()?;
    let nominal = cfg.nominal_quantizer()?;
    if nominal.code_count() != true_q.code_count() {
        return Err(Error::Config("quantizer file does not match bits".into()));
    }
    let s = cfg.stimulus().render();
    let noise = cfg.noise_model(derive_seed(cfg.seed, 0));
    noise.validate().stage(Stage::Synthesis)?;
    let est_cfg = &cfg.estimation;

    let k_range = threshold_range(&nominal, &s, est_cfg.k_margin_lsb.map(|m| m * delta))?;

    let mut calibration = None;
    let q_used = match est_cfg.transitions {
        TransitionSource::Nominal => nominal.clone(),
        TransitionSource::Truth => true_q.clone(),
        TransitionSource::Servoloop => {
            let spec = cfg.servoloop.as_ref().expect("validated");
            let device = SimulatedDevice::new(true_q.clone(), cfg.noise_model(derive_seed(cfg.seed, 1)));
            let codes: Vec<usize> = k_range.clone().collect();
            let cal = calibrate(&device, &spec.resolve(delta), &codes, &nominal)?;
            let q = cal.to_quantizer(&nominal).stage(Stage::Calibration)?;
            calibration = Some(cal);
            q
        }
    };

    let solver = match (est_cfg.mode, &cfg.stimulus) {
        (Mode::SinefitS, crate::config::StimulusSpec::Sine { periods, .. }) => {
            Some((LeastSquares3::new(&design_matrix(*periods, s.len())).stage(Stage::SineFit)?, *periods))
        }
        _ => None,
    };
    let acq = acquire(&true_q, &s, &noise, cfg.records, solver.as_ref().map(|(ls, _)| (ls, &q_used)))?;

    let (s_used, sinefit) = match solver {
        Some((_, periods)) => {
            let fit = summarize(acq.thetas, periods, s.len());
            (fit.reconstructed.clone(), Some(fit))
        }
        None => (s.clone(), None),
    };

    let counts = acq.counts.assume_inputs(&q_used, &s_used).stage(Stage::Estimation)?;
    let tolerance = est_cfg.tolerance.unwrap_or_else(|| default_tolerance(&q_used));
    let partition =
        build_partition_in_range(&q_used, &s_used, tolerance, k_range.clone()).stage(Stage::Partition)?;
    let mut estimate = estimate_cdf_from_counts(&counts, &partition).stage(Stage::Estimation)?;

    let delta_eps = match est_cfg.delta_eps {
        DeltaEpsMode::None => None,
        DeltaEpsMode::User => est_cfg.delta_eps_lsb.map(|v| v * delta),
        DeltaEpsMode::Truth => {
            Some(abscissa_error_bound(&true_q, &s, &q_used, &s_used, k_range.clone()))
        }
    };
    let bounds = delta_eps.map(|e| bound_curves(&estimate, e)).transpose().stage(Stage::Bounds)?;

    let fit = fit_gaussian_cdf(&estimate, est_cfg.weighting.into()).stage(Stage::GaussianFit)?;
    estimate.fit = Some(fit.params());
    let pdf = pdf_from_cdf(&estimate, &PdfMethod::CentralDifference { window: est_cfg.pdf_window })
        .stage(Stage::Pdf)?;

    Ok(ScenarioOutcome {
        config: cfg.clone(),
        delta,
        true_quantizer: true_q,
        quantizer_used: q_used,
        stimulus_true: s,
        stimulus_used: s_used,
        noise,
        calibration,
        sinefit,
        partition,
        estimate,
        fit,
        delta_eps,
        bounds,
        pdf,
    })
}

/// Writes the artifact bundle; returns the paths written.
pub fn write_artifacts(outcome: &ScenarioOutcome, dir: &Path, members: bool) -> Result<Vec<PathBuf>> {
    let mut set = ArtifactSet::create(dir)?;
    set.write("estimate.csv", &formats::estimate_table(&outcome.estimate, Some(&outcome.fit)).render())?;
    if let Some(b) = &outcome.bounds {
        set.write("bounds.csv", &formats::bounds_table(b).render())?;
    }
    set.write("pdf.csv", &formats::pdf_table(&outcome.pdf, outcome.estimate.fit.as_ref()).render())?;
    set.write("partition.csv", &formats::partition_table(&outcome.partition).render())?;
    if members {
        set.write("partition_members.csv", &formats::partition_members_table(&outcome.partition).render())?;
    }
    if let Some(f) = &outcome.sinefit {
        set.write("theta.csv", &formats::theta_table(f).render())?;
    }
    if let Some(c) = &outcome.calibration {
        set.write("calibration.csv", &formats::calibration_table(c).render())?;
        set.write("quantizer_calibrated.txt", &formats::render_quantizer(&outcome.quantizer_used))?;
    }
    set.write("summary.txt", &outcome.summary().render())?;
    Ok(set.keep())
}

/// Runs `f` on a pool of `threads` workers (`0` keeps the global pool).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}
