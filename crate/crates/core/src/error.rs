use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("unsupported format version {found} (supported: {supported})")]
    FormatVersion { found: u32, supported: u32 },

    #[error("record {record_id}: {message}")]
    Record { record_id: String, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("value {value} outside the storage domain [0, 255]")]
    Domain { value: f64 },

    #[error("{axis} = {value} outside calibration range [{min}, {max}]")]
    Calibration { axis: &'static str, value: f64, min: f64, max: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter {name}: {message}")]
    Parameter { name: &'static str, message: String },

    #[error("diffusion step {t} outside 1..={steps}")]
    Step { t: usize, steps: usize },

    #[error("non-finite value at training step {step} (diffusion t = {t}): {message}")]
    Numerical { step: u64, t: usize, message: String },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: u64, loss: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("checkpoint incompatible: {0}")]
    Compatibility(String),

    #[error("expected {expected} markers, detected {found}")]
    Detection { expected: usize, found: usize },

    #[error("no markers detected")]
    NoMarkers,

    #[error("marker correspondence failed: {0}")]
    Correspondence(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::Parameter { name, message: message.into() }
    }
}
