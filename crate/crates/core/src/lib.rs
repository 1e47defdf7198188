//! Estimation of the noise CDF and PDF at the input of a memoryless
//! quantizer from quantized output records.
//!
//! The crate is `no_std` (with `alloc`). It covers quantizer models,
//! stimulus and noise synthesis, the `(n, k)` partition, the CDF estimator
//! with its variance and error bands, sine fitting of the stimulus,
//! Gaussian CDF fitting and servoloop calibration of transition levels.
//! File formats, scenarios and the command line live in the `quantnoise`
//! crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod estimator;
pub mod fingerprint;
pub mod gaussfit;
pub mod isotonic;
pub mod normal;
pub mod partition;
pub mod quantizer;
pub mod records;
pub mod rng;
pub mod servoloop;
pub mod sinefit;
pub mod stimulus;

pub use error::{Error, Result};
pub use estimator::{
    bound_curves, estimate_cdf, estimate_cdf_from_counts, interpolate_cdf, pdf_from_cdf,
    theoretical_variance, CdfEstimate, CdfPoint, ErrorBounds, PdfMethod,
};
pub use fingerprint::Fingerprint;
pub use gaussfit::{fit_gaussian_cdf, GaussianCdfFit, Weighting};
pub use normal::GaussianParams;
pub use partition::{build_partition, build_partition_in_range, PartitionTable};
pub use quantizer::QuantizerModel;
pub use records::{CodeRecords, CumulativeCounts};
pub use servoloop::{calibrate_all, servoloop, CalibrationResult, DcDevice, ServoloopConfig};
pub use sinefit::{design_matrix, fit_records, SineFitResult};
pub use stimulus::{
    Matrix, NoiseFamily, NoiseModel, SineStimulus, Stimulus, StimulusPlan, SweptDcStimulus,
};
