use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid angular momentum: {0}")]
    AngularMomentum(String),

    #[error("invalid transition: {0}")]
    Transition(String),

    #[error("invalid beam configuration: {0}")]
    BeamConfig(String),

    #[error("unsupported beam half-angle {0} rad (only pi/4 is supported)")]
    UnsupportedAngle(f64),

    #[error("invalid polarization label `{0}`")]
    PolarizationLabel(String),

    #[error("scan resolution too coarse: step {step:.4e} exceeds limit {limit:.4e}")]
    ScanResolution { step: f64, limit: f64 },

    #[error("invalid simulation parameters: {0}")]
    SimParams(String),

    #[error("trajectory of atom {atom} diverged at t = {time:.6e}: {reason}")]
    Diverged {
        atom: usize,
        time: f64,
        reason: String,
    },

    #[error("empty field of view: no samples inside [{lo:.4e}, {hi:.4e}]")]
    EmptyFieldOfView { lo: f64, hi: f64 },

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("snapshot error in {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
