use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate direction: cannot normalize a zero-length vector")]
    DegenerateDirection,

    #[error("quaternion is not unit length (norm {norm})")]
    NonUnitQuaternion { norm: f64 },

    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),

    #[error("no sample to hold at t={t} (first sample at t={first})")]
    NoSampleToHold { t: f64, first: f64 },

    #[error("insufficient initialization window: need {required} s of data, got {available} s")]
    InsufficientInitWindow { available: f64, required: f64 },

    #[error("numerical divergence in block `{block}` at t={t}")]
    NumericalDivergence { block: &'static str, t: f64 },

    #[error("timestamp misalignment at sample {index}: {detail}")]
    Misaligned { index: usize, detail: String },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("frame index not found: {0}")]
    FrameIndexNotFound(PathBuf),

    #[error("time ranges do not overlap: [{a_start}, {a_end}] vs [{b_start}, {b_end}]")]
    NoOverlap {
        a_start: f64,
        a_end: f64,
        b_start: f64,
        b_end: f64,
    },

    #[error("infeasible spec: {quantity} = {value} ({constraint})")]
    Infeasible {
        quantity: &'static str,
        value: f64,
        constraint: String,
    },

    #[error("zero variance: series is constant")]
    ZeroVariance,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for failures caused by the data or configuration handed in, as
    /// opposed to failures inside the simulation itself.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::NumericalDivergence { .. })
    }
}
