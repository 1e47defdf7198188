//! Scenario runner, artifact formats and command-line interface for
//! estimating a noise CDF from quantized records.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod replicate;
pub mod scenario;

pub use config::ScenarioConfig;
pub use error::{Error, Result, Stage};
pub use quantnoise_core as core;
pub use replicate::{run_replications, ReplicationStats};
pub use scenario::{run_scenario, write_artifacts, ScenarioOutcome};
