//! Scenario configuration and the named scenarios.
//!
//! Lengths marked `_lsb` are multiples of the nominal quantization step
//! `Δ = (high - low) / 2^bits`; everything else is in volts or plain units.
//! A config file names a scenario and may replace any whole section; the
//! `custom` scenario has no defaults, so every section must be present.
//! See README.md for the full schema.

use std::path::{Path, PathBuf};

use quantnoise_core::servoloop::ServoloopConfig;
use quantnoise_core::{NoiseFamily, QuantizerModel, SineStimulus, Stimulus, SweptDcStimulus};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCENARIO_NAMES: [&str; 5] = ["fig2a", "fig2b", "fig2c", "experiment", "custom"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSpec {
    pub bits: u32,
    pub low: f64,
    pub high: f64,
    /// Bound on the injected transition-level deviation; 0 gives an ideal quantizer.
    #[serde(default)]
    pub inl_bound_lsb: f64,
    /// Seed of the INL perturbation, independent of the run seed.
    #[serde(default)]
    pub seed: u64,
    /// Read the true transitions from a quantizer file instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StimulusSpec {
    Sine {
        amplitude_lsb: f64,
        periods: u32,
        samples: usize,
        /// Initial phase as a multiple of π.
        phase_over_pi: f64,
        #[serde(default)]
        offset_lsb: f64,
    },
    SweptDc {
        low_lsb: f64,
        high_lsb: f64,
        /// Grid spacing in volts.
        step: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    Uniform,
    Laplace,
}

impl From<Family> for NoiseFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Gaussian => NoiseFamily::Gaussian,
            Family::Uniform => NoiseFamily::Uniform,
            Family::Laplace => NoiseFamily::Laplace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub family: Family,
    #[serde(default)]
    pub mean_lsb: f64,
    /// σ for Gaussian, half-width for uniform, `b` for Laplace.
    pub scale_lsb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// The stimulus sequence is known exactly.
    KnownS,
    /// The stimulus is reconstructed by a three-parameter sine fit of the codes.
    SinefitS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionSource {
    /// Ideal uniform levels from `bits`, `low`, `high`.
    Nominal,
    /// The true (possibly perturbed) levels.
    Truth,
    /// Levels measured by the servoloop against the simulated device.
    Servoloop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaEpsMode {
    None,
    /// Largest abscissa error against the simulated truth.
    Truth,
    /// Fixed value from `delta_eps_lsb`.
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingSpec {
    None,
    InverseVariance,
}

impl From<WeightingSpec> for quantnoise_core::Weighting {
    fn from(w: WeightingSpec) -> Self {
        match w {
            WeightingSpec::None => quantnoise_core::Weighting::None,
            WeightingSpec::InverseVariance => quantnoise_core::Weighting::InverseVariance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSpec {
    pub mode: Mode,
    pub transitions: TransitionSource,
    /// Partition pooling tolerance in volts; default `1e-9 Δ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub delta_eps: DeltaEpsMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_eps_lsb: Option<f64>,
    pub weighting: WeightingSpec,
    /// Half-width, in points, of the central-difference density estimate.
    pub pdf_window: usize,
    /// Restrict thresholds to `T_k` within this distance of the stimulus
    /// range; all usable thresholds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_margin_lsb: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoloopSpec {
    pub samples_per_step: usize,
    pub initial_step_lsb: f64,
    pub decay: f64,
    pub max_iterations: usize,
    pub tolerance_lsb: f64,
}

impl ServoloopSpec {
    pub fn defaults() -> Self {
        let c = ServoloopConfig::for_step(1.0);
        Self {
            samples_per_step: c.samples_per_step,
            initial_step_lsb: c.initial_step,
            decay: c.decay,
            max_iterations: c.max_iterations,
            tolerance_lsb: c.tolerance,
        }
    }

    pub fn resolve(&self, delta: f64) -> ServoloopConfig {
        ServoloopConfig {
            samples_per_step: self.samples_per_step,
            initial_step: self.initial_step_lsb * delta,
            decay: self.decay,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance_lsb * delta,
        }
    }
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub seed: u64,
    pub records: usize,
    pub quantizer: QuantizerSpec,
    pub stimulus: StimulusSpec,
    pub noise: NoiseSpec,
    pub estimation: EstimationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub servoloop: Option<ServoloopSpec>,
}

/// Config file contents before expansion against a named scenario.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub records: Option<usize>,
    pub quantizer: Option<QuantizerSpec>,
    pub stimulus: Option<StimulusSpec>,
    pub noise: Option<NoiseSpec>,
    pub estimation: Option<EstimationSpec>,
    pub servoloop: Option<ServoloopSpec>,
}

fn fig2(scale_lsb: f64, mode: Mode, name: &str) -> ScenarioConfig {
    ScenarioConfig {
        scenario: name.to_string(),
        seed: 1,
        records: 1000,
        quantizer: QuantizerSpec { bits: 8, low: -1.0, high: 1.0, inl_bound_lsb: 0.0, seed: 0, file: None },
        stimulus: StimulusSpec::Sine {
            amplitude_lsb: 5.37,
            periods: 35,
            samples: 151,
            phase_over_pi: 5.5,
            offset_lsb: 0.0,
        },
        noise: NoiseSpec { family: Family::Gaussian, mean_lsb: 0.0, scale_lsb },
        estimation: EstimationSpec {
            mode,
            transitions: TransitionSource::Nominal,
            tolerance: None,
            delta_eps: match mode {
                Mode::KnownS => DeltaEpsMode::None,
                Mode::SinefitS => DeltaEpsMode::Truth,
            },
            delta_eps_lsb: None,
            weighting: WeightingSpec::None,
            pdf_window: 8,
            k_margin_lsb: None,
        },
        servoloop: None,
    }
}

/// Parameters of a named scenario; `None` for `custom` and unknown names.
pub fn named(name: &str) -> Option<ScenarioConfig> {
    Some(match name {
        "fig2a" => fig2(0.25, Mode::KnownS, name),
        "fig2b" => fig2(0.25, Mode::SinefitS, name),
        "fig2c" => fig2(0.18, Mode::SinefitS, name),
        "experiment" => ScenarioConfig {
            scenario: name.to_string(),
            seed: 1,
            records: 250_000,
            quantizer: QuantizerSpec {
                bits: 12,
                low: -10.0,
                high: 10.0,
                inl_bound_lsb: 0.25,
                seed: 4096,
                file: None,
            },
            stimulus: StimulusSpec::SweptDc { low_lsb: -4.0, high_lsb: 4.0, step: 2.45e-4 },
            noise: NoiseSpec { family: Family::Gaussian, mean_lsb: -0.0214, scale_lsb: 0.1867 },
            estimation: EstimationSpec {
                mode: Mode::KnownS,
                transitions: TransitionSource::Servoloop,
                tolerance: None,
                delta_eps: DeltaEpsMode::Truth,
                delta_eps_lsb: None,
                weighting: WeightingSpec::None,
                pdf_window: 8,
                k_margin_lsb: Some(2.0),
            },
            servoloop: Some(ServoloopSpec::defaults()),
        },
        _ => return None,
    })
}

impl ScenarioConfig {
    /// Expands a parsed file against its named scenario.
    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let name = file.scenario.clone().unwrap_or_else(|| "custom".to_string());
        let mut cfg = match named(&name) {
            Some(base) => base,
            None if name == "custom" => {
                let missing = |what: &str| Error::Config(format!("custom scenario needs [{what}]"));
                ScenarioConfig {
                    scenario: name.clone(),
                    seed: file.seed.ok_or_else(|| missing("seed"))?,
                    records: file.records.ok_or_else(|| missing("records"))?,
                    quantizer: file.quantizer.clone().ok_or_else(|| missing("quantizer"))?,
                    stimulus: file.stimulus.clone().ok_or_else(|| missing("stimulus"))?,
                    noise: file.noise.clone().ok_or_else(|| missing("noise"))?,
                    estimation: file.estimation.clone().ok_or_else(|| missing("estimation"))?,
                    servoloop: file.servoloop.clone(),
                }
            }
            None => {
                return Err(Error::Config(format!(
                    "unknown scenario {name:?}; expected one of {}",
                    SCENARIO_NAMES.join(", ")
                )))
            }
        };
        if let Some(v) = file.seed {
            cfg.seed = v;
        }
        if let Some(v) = file.records {
            cfg.records = v;
        }
        if let Some(v) = file.quantizer {
            cfg.quantizer = v;
        }
        if let Some(v) = file.stimulus {
            cfg.stimulus = v;
        }
        if let Some(v) = file.noise {
            cfg.noise = v;
        }
        if let Some(v) = file.estimation {
            cfg.estimation = v;
        }
        if let Some(v) = file.servoloop {
            cfg.servoloop = Some(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    /// Nominal step of the configured (uniform) quantizer.
    pub fn delta(&self) -> f64 {
        (self.quantizer.high - self.quantizer.low) / f64::from(1u32 << self.quantizer.bits.min(31))
    }

    pub fn validate(&self) -> Result<()> {
        let q = &self.quantizer;
        if !(1..=24).contains(&q.bits) {
            return Err(Error::Config(format!("bits must be in 1..=24, got {}", q.bits)));
        }
        if !(q.low < q.high && q.low.is_finite() && q.high.is_finite()) {
            return Err(Error::Config(format!("quantizer range [{}, {}] is empty", q.low, q.high)));
        }
        if !(q.inl_bound_lsb >= 0.0 && q.inl_bound_lsb < 0.5) {
            return Err(Error::Config("inl_bound_lsb must be in [0, 0.5)".into()));
        }
        if self.records == 0 {
            return Err(Error::Config("records must be >= 1".into()));
        }
        if !(self.noise.scale_lsb > 0.0 && self.noise.scale_lsb.is_finite()) {
            return Err(Error::Config("noise scale_lsb must be > 0".into()));
        }
        let e = &self.estimation;
        if let Some(t) = e.tolerance {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config("tolerance must be >= 0".into()));
            }
        }
        match (e.delta_eps, e.delta_eps_lsb) {
            (DeltaEpsMode::User, None) => {
                return Err(Error::Config("delta_eps = \"user\" needs delta_eps_lsb".into()))
            }
            (DeltaEpsMode::User, Some(v)) if !(v >= 0.0 && v.is_finite()) => {
                return Err(Error::Config("delta_eps_lsb must be >= 0".into()))
            }
            _ => {}
        }
        if e.pdf_window == 0 {
            return Err(Error::Config("pdf_window must be >= 1".into()));
        }
        if matches!(self.stimulus, StimulusSpec::SweptDc { .. }) && e.mode == Mode::SinefitS {
            return Err(Error::Config("sinefit-s mode needs a sine stimulus".into()));
        }
        if e.transitions == TransitionSource::Servoloop {
            let s = self
                .servoloop
                .as_ref()
                .ok_or_else(|| Error::Config("transitions = \"servoloop\" needs [servoloop]".into()))?;
            s.resolve(self.delta()).validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.stimulus().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn stimulus(&self) -> Stimulus {
        let d = self.delta();
        match &self.stimulus {
            StimulusSpec::Sine { amplitude_lsb, periods, samples, phase_over_pi, offset_lsb } => {
                Stimulus::Sine(
                    SineStimulus::new(
                        amplitude_lsb * d,
                        *periods,
                        *samples,
                        phase_over_pi * std::f64::consts::PI,
                    )
                    .with_offset(offset_lsb * d),
                )
            }
            StimulusSpec::SweptDc { low_lsb, high_lsb, step } => {
                // invalid grids surface through `validate`
                Stimulus::SweptDc(
                    SweptDcStimulus::grid(low_lsb * d, high_lsb * d, *step)
                        .unwrap_or(SweptDcStimulus { levels: Vec::new() }),
                )
            }
        }
    }

    /// Ideal uniform quantizer matching the spec.
    pub fn nominal_quantizer(&self) -> Result<QuantizerModel> {
        let q = &self.quantizer;
        QuantizerModel::uniform(q.bits, q.low, q.high).map_err(|e| Error::Config(e.to_string()))
    }

    /// The quantizer the simulated device actually has.
    pub fn true_quantizer(&self) -> Result<QuantizerModel> {
        if let Some(path) = &self.quantizer.file {
            return crate::formats::read_quantizer(path).map_err(|e| Error::Config(e.to_string()));
        }
        let nominal = self.nominal_quantizer()?;
        QuantizerModel::perturbed(&nominal, self.quantizer.inl_bound_lsb * self.delta(), self.quantizer.seed)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn noise_model(&self, seed: u64) -> quantnoise_core::NoiseModel {
        let d = self.delta();
        quantnoise_core::NoiseModel {
            family: self.noise.family.into(),
            location: self.noise.mean_lsb * d,
            scale: self.noise.scale_lsb * d,
            seed,
        }
    }
}
