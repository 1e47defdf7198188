use alloc::string::String;
use core::fmt;

/// Failures raised by the estimation pipeline, tagged by the stage that produced them.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid quantizer, stimulus, noise or loop parameters.
    Config(String),
    /// Grouping of `T_k - s_n` differences failed.
    Partition(String),
    /// Records and partition disagree, or the estimate cannot support the request.
    Estimation(String),
    /// Least-squares fitting failed (rank deficiency, degenerate data).
    Fit(String),
    /// Servoloop could not locate a transition.
    Calibration(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Partition(msg) => write!(f, "partition error: {msg}"),
            Error::Estimation(msg) => write!(f, "estimation error: {msg}"),
            Error::Fit(msg) => write!(f, "fit error: {msg}"),
            Error::Calibration(msg) => write!(f, "calibration error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
