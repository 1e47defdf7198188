//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use quantnoise_core::estimator::{bound_curves, estimate_cdf};
use quantnoise_core::gaussfit::fit_gaussian_cdf;
use quantnoise_core::partition::{build_partition_in_range, default_tolerance};
use quantnoise_core::records::CodeRecords;
use quantnoise_core::rng::derive_seed;
use quantnoise_core::servoloop::SimulatedDevice;
use quantnoise_core::sinefit::fit_records;
use quantnoise_core::stimulus::synthesize_record;
use quantnoise_core::{Matrix, QuantizerModel};

use crate::config::{self, ScenarioConfig, WeightingSpec};
use crate::error::{Error, Result, Stage, StageExt};
use crate::formats::{self, ArtifactSet, Summary};
use crate::replicate::run_replications;
use crate::scenario::{self, calibrate, run_scenario, threshold_range, with_threads};

#[derive(Debug, Parser)]
#[command(name = "quantnoise", version, about = "Noise CDF estimation through a quantizer")]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving the output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Scenario config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a quantizer transitions file.
    GenQuantizer(GenQuantizerArgs),
    /// Generate stimulus and code records for a scenario.
    Simulate(SimulateArgs),
    /// Estimate the noise CDF from code records.
    Estimate(EstimateArgs),
    /// Three-parameter sine fit of code records.
    Sinefit(SinefitArgs),
    /// Fit a Gaussian CDF to an estimate file.
    FitGaussian(FitGaussianArgs),
    /// Servoloop calibration of a scenario's simulated device.
    Servoloop(ServoloopArgs),
    /// Run a named scenario end to end.
    Mc(McArgs),
    /// Run a scenario repeatedly with derived seeds.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
pub struct GenQuantizerArgs {
    #[arg(long, default_value_t = 8)]
    pub bits: u32,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub low: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub high: f64,
    /// Random transition deviation bound, in steps.
    #[arg(long, default_value_t = 0.0)]
    pub inl_bound_lsb: f64,
    /// Seed of the deviation pattern.
    #[arg(long, default_value_t = 0)]
    pub quantizer_seed: u64,
    #[arg(long, default_value = "quantizer.txt")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    /// Named scenario; ignored when --config is given.
    #[arg(long, default_value = "fig2a")]
    pub scenario: String,
    /// Override the number of records.
    #[arg(long)]
    pub records: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    /// Also write the noisy input samples (n,r,x).
    #[arg(long)]
    pub samples: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub quantizer: PathBuf,
    #[arg(long)]
    pub stimulus: PathBuf,
    #[arg(long)]
    pub codes: PathBuf,
    /// Pooling tolerance in volts.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Also write bounds.csv for this abscissa error (volts).
    #[arg(long)]
    pub delta_eps: Option<f64>,
    /// Add the pooled (n,k) pairs in partition_members.csv.
    #[arg(long)]
    pub members: bool,
}

#[derive(Debug, Args)]
pub struct SinefitArgs {
    #[arg(long)]
    pub quantizer: PathBuf,
    #[arg(long)]
    pub codes: PathBuf,
    /// Periods per record.
    #[arg(long)]
    pub periods: u32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightingArg {
    None,
    InverseVariance,
}

#[derive(Debug, Args)]
pub struct FitGaussianArgs {
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long, value_enum, default_value_t = WeightingArg::None)]
    pub weighting: WeightingArg,
}

#[derive(Debug, Args)]
pub struct ServoloopArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    /// Also write the calibrated levels as a quantizer file.
    #[arg(long)]
    pub to_quantizer: bool,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// fig2a, fig2b, fig2c or experiment; ignored when --config is given.
    #[arg(default_value = "fig2a")]
    pub scenario: String,
    #[arg(long)]
    pub records: Option<usize>,
    #[arg(long)]
    pub members: bool,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(default_value = "fig2a")]
    pub scenario: String,
    /// Number of replications.
    #[arg(long, short = 'm', default_value_t = 10)]
    pub count: usize,
    #[arg(long)]
    pub records: Option<usize>,
}

impl Cli {
    fn scenario(&self, name: &str, records: Option<usize>) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => config::named(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown scenario {name:?}; named scenarios are fig2a, fig2b, fig2c, experiment (custom needs --config)"
                ))
            })?,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(r) = records {
            cfg.records = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` and runs the requested command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Config(e.render().to_string())),
    };
    with_threads(cli.threads, || dispatch(&cli))?
}

fn dispatch(cli: &Cli) -> Result<()> {
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::GenQuantizer(a) => gen_quantizer(a, out),
        Command::Simulate(a) => simulate(cli, a, out),
        Command::Estimate(a) => estimate(a, out),
        Command::Sinefit(a) => sinefit(a, out),
        Command::FitGaussian(a) => fit_gaussian(a, out),
        Command::Servoloop(a) => servoloop_cmd(cli, a, out),
        Command::Mc(a) => {
            let cfg = cli.scenario(&a.scenario, a.records)?;
            let outcome = run_scenario(&cfg)?;
            let files = scenario::write_artifacts(&outcome, out, a.members)?;
            report(&files);
            print!("{}", outcome.summary().render());
            match outcome.non_convergence() {
                Some((stage, message)) => Err(Error::NonConvergence { stage, message }),
                None => Ok(()),
            }
        }
        Command::Replicate(a) => {
            let cfg = cli.scenario(&a.scenario, a.records)?;
            let stats = run_replications(&cfg, a.count)?;
            let mut set = ArtifactSet::create(out)?;
            if let Some(t) = stats.points_table() {
                set.write("replication_points.csv", &t.render())?;
            }
            set.write("replication_runs.csv", &stats.runs_table().render())?;
            report(&set.keep());
            Ok(())
        }
    }
}

fn report(files: &[PathBuf]) {
    for f in files {
        eprintln!("wrote {}", f.display());
    }
}

fn gen_quantizer(a: &GenQuantizerArgs, out: &Path) -> Result<()> {
    let base = QuantizerModel::uniform(a.bits, a.low, a.high).map_err(|e| Error::Config(e.to_string()))?;
    let q = QuantizerModel::perturbed(&base, a.inl_bound_lsb * base.mean_step(), a.quantizer_seed)
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut set = ArtifactSet::create(out)?;
    set.write(&a.output, &formats::render_quantizer(&q))?;
    report(&set.keep());
    Ok(())
}

fn simulate(cli: &Cli, a: &SimulateArgs, out: &Path) -> Result<()> {
    let cfg = cli.scenario(&a.scenario.scenario, a.scenario.records)?;
    let q = cfg.true_quantizer()?;
    let s = cfg.stimulus().render();
    let noise = cfg.noise_model(derive_seed(cfg.seed, 0));
    noise.validate().stage(Stage::Synthesis)?;
    let x = synthesize_matrix(&s, &noise, cfg.records)?;
    let codes = x.map(|v| q.quantize(v));
    let mut set = ArtifactSet::create(out)?;
    set.write("quantizer.txt", &formats::render_quantizer(&q))?;
    set.write("stimulus.csv", &formats::stimulus_table(&s).render())?;
    set.write("codes.csv", &formats::codes_table(&codes, &q).render())?;
    if a.samples {
        set.write("samples.csv", &formats::samples_table(&x).render())?;
    }
    report(&set.keep());
    Ok(())
}

fn synthesize_matrix(s: &[f64], noise: &quantnoise_core::NoiseModel, records: usize) -> Result<Matrix<f64>> {
    use rayon::prelude::*;
    let data: Vec<f64> = (0..records)
        .into_par_iter()
        .flat_map_iter(|r| synthesize_record(s, noise, r))
        .collect();
    Matrix::from_records(s.len(), records, data).stage(Stage::Synthesis)
}

fn load_records(quantizer: &Path, codes: &Path, stimulus: &[f64]) -> Result<(QuantizerModel, CodeRecords)> {
    let q = formats::read_quantizer(quantizer)?;
    let m = formats::parse_codes(&formats::read_text(codes)?, codes)?;
    if m.samples() != stimulus.len() {
        return Err(Error::format(codes, format!("{} samples per record, stimulus has {}", m.samples(), stimulus.len())));
    }
    let rec = CodeRecords::new(m, &q, stimulus).stage(Stage::Estimation)?;
    Ok((q, rec))
}

fn estimate(a: &EstimateArgs, out: &Path) -> Result<()> {
    let s = formats::parse_stimulus(&formats::read_text(&a.stimulus)?, &a.stimulus)?;
    let (q, rec) = load_records(&a.quantizer, &a.codes, &s)?;
    let k_range = a.k_min.unwrap_or(1)..=a.k_max.unwrap_or(q.code_count() - 1);
    let tol = a.tolerance.unwrap_or_else(|| default_tolerance(&q));
    let part = build_partition_in_range(&q, &s, tol, k_range).stage(Stage::Partition)?;
    let est = estimate_cdf(&rec, &part).stage(Stage::Estimation)?;
    let mut set = ArtifactSet::create(out)?;
    set.write("partition.csv", &formats::partition_table(&part).render())?;
    if a.members {
        set.write("partition_members.csv", &formats::partition_members_table(&part).render())?;
    }
    set.write("estimate.csv", &formats::estimate_table(&est, None).render())?;
    if let Some(e) = a.delta_eps {
        let b = bound_curves(&est, e).stage(Stage::Bounds)?;
        set.write("bounds.csv", &formats::bounds_table(&b).render())?;
    }
    report(&set.keep());
    Ok(())
}

fn sinefit(a: &SinefitArgs, out: &Path) -> Result<()> {
    let q = formats::read_quantizer(&a.quantizer)?;
    let m = formats::parse_codes(&formats::read_text(&a.codes)?, &a.codes)?;
    if let Some(bad) = m.as_slice().iter().find(|&&c| c == 0 || c as usize > q.code_count()) {
        return Err(Error::format(&a.codes, format!("code {bad} outside 1..={}", q.code_count())));
    }
    let fit = fit_records(&m.map(|c| q.code_voltage(c)), a.periods).stage(Stage::SineFit)?;
    let mut set = ArtifactSet::create(out)?;
    set.write("theta.csv", &formats::theta_table(&fit).render())?;
    set.write("stimulus_fit.csv", &formats::stimulus_table(&fit.reconstructed).render())?;
    report(&set.keep());
    println!("A_hat={} phi0_hat={} offset_hat={}", fit.amplitude, fit.phase, fit.offset());
    Ok(())
}

fn fit_gaussian(a: &FitGaussianArgs, out: &Path) -> Result<()> {
    let (mut est, _) = formats::parse_estimate(&formats::read_text(&a.estimate)?, &a.estimate)?;
    let weighting = match a.weighting {
        WeightingArg::None => WeightingSpec::None,
        WeightingArg::InverseVariance => WeightingSpec::InverseVariance,
    };
    let fit = fit_gaussian_cdf(&est, weighting.into()).stage(Stage::GaussianFit)?;
    est.fit = Some(fit.params());
    let mut summary = Summary::default();
    summary.put_num("mu_hat", fit.mean);
    summary.put_num("sigma_hat", fit.sigma);
    summary.put_num("max_residual", fit.max_residual);
    summary.put_num("rms_residual", fit.rms_residual);
    summary.put("fit_iterations", fit.iterations);
    summary.put("fit_converged", fit.converged);
    let mut set = ArtifactSet::create(out)?;
    set.write("estimate_fit.csv", &formats::estimate_table(&est, Some(&fit)).render())?;
    set.write("fit_summary.txt", &summary.render())?;
    report(&set.keep());
    print!("{}", summary.render());
    if !fit.converged {
        return Err(Error::NonConvergence {
            stage: Stage::GaussianFit,
            message: format!("stopped after {} iterations", fit.iterations),
        });
    }
    Ok(())
}

fn servoloop_cmd(cli: &Cli, a: &ServoloopArgs, out: &Path) -> Result<()> {
    let cfg = cli.scenario(&a.scenario.scenario, a.scenario.records)?;
    let delta = cfg.delta();
    let nominal = cfg.nominal_quantizer()?;
    let device = SimulatedDevice::new(cfg.true_quantizer()?, cfg.noise_model(derive_seed(cfg.seed, 1)));
    let s = cfg.stimulus().render();
    let codes: Vec<usize> = threshold_range(&nominal, &s, cfg.estimation.k_margin_lsb.map(|m| m * delta))?.collect();
    let spec = cfg.servoloop.clone().unwrap_or_else(config::ServoloopSpec::defaults);
    let cal = calibrate(&device, &spec.resolve(delta), &codes, &nominal)?;
    let mut set = ArtifactSet::create(out)?;
    set.write("calibration.csv", &formats::calibration_table(&cal).render())?;
    if a.to_quantizer {
        let q = cal.to_quantizer(&nominal).stage(Stage::Calibration)?;
        set.write("quantizer_calibrated.txt", &formats::render_quantizer(&q))?;
    }
    report(&set.keep());
    if let Some(line) = cal.line {
        println!("gain={} offset={} max_deviation={}", line.gain, line.offset, line.max_deviation);
    }
    if !cal.all_converged() {
        return Err(Error::NonConvergence {
            stage: Stage::Calibration,
            message: format!("{} of {} transitions unresolved", codes.len() - cal.entries.iter().filter(|e| e.converged).count(), codes.len()),
        });
    }
    Ok(())
}
