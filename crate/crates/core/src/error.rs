use std::path::PathBuf;

/// Errors raised by the numerical core and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("covariance factorization failed at index {index}: {reason}")]
    CovarianceFactorization { index: usize, reason: String },

    #[error("time {value} outside the path horizon [0, {horizon}]")]
    OutOfHorizon { value: f64, horizon: f64 },

    #[error("Young condition violated: alpha + beta = {sum} must exceed 1")]
    YoungCondition { sum: f64 },

    #[error("incompatible time grids: {0}")]
    GridMismatch(String),

    #[error("kernel support radius {radius} exceeds half the box side {half_box}")]
    KernelSupport { radius: f64, half_box: f64 },

    #[error("grid under-resolves the kernel: {cells_per_bandwidth:.2} cells per bandwidth, need at least 4 (resolution >= {required})")]
    UnderResolved { cells_per_bandwidth: f64, required: usize },

    #[error("density must be strictly positive (min {min})")]
    NonPositiveDensity { min: f64 },

    #[error("vacuum breach: min density {min} below floor {floor}")]
    Vacuum { min: f64, floor: f64 },

    #[error("CFL violation: dt {dt} exceeds the stable bound {bound}")]
    Cfl { dt: f64, bound: f64 },

    #[error("non-finite state at t = {time}: {what}")]
    NonFinite { time: f64, what: String },

    #[error("time mismatch between particles ({particles}) and fluid ({fluid})")]
    TimeMismatch { particles: f64, fluid: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
