use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum IsnnError {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("epsilon {0} outside the crypticity bound [0,16]")]
    EpsilonOutOfRange(i64),

    #[error("entropy source too short: need {need} bytes, got {got}")]
    ShortEntropy { need: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value detected: {0}")]
    NonFinite(String),

    #[error("format error in {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("run mismatch: {0}")]
    RunMismatch(String),
}

impl IsnnError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        IsnnError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, IsnnError>;
