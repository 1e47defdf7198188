use std::path::PathBuf;

use quantnoise_core::Error as CoreError;

/// Pipeline stage that produced an error, used for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Quantizer,
    Synthesis,
    SineFit,
    Calibration,
    Partition,
    Estimation,
    Bounds,
    GaussianFit,
    Pdf,
    Output,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Quantizer => "quantizer",
            Stage::Synthesis => "synthesis",
            Stage::SineFit => "sinefit",
            Stage::Calibration => "calibration",
            Stage::Partition => "partition",
            Stage::Estimation => "estimation",
            Stage::Bounds => "bounds",
            Stage::GaussianFit => "gaussian-fit",
            Stage::Pdf => "pdf",
            Stage::Output => "output",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: CoreError,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("[{stage}] did not converge: {message}")]
    NonConvergence { stage: Stage, message: String },
}

impl Error {
    /// Process exit code: 2 config, 3 pipeline stage, 4 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonConvergence { .. } => 4,
            Error::Stage { .. } | Error::Format { .. } | Error::Io { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Tags core errors with the stage they came from.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for quantnoise_core::Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|source| Error::Stage { stage, source })
    }
}
