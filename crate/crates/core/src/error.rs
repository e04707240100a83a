use std::path::PathBuf;

/// Errors raised by the tracking core.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("sequence too short for {what}: got {got}, need at least {need}")]
    TooShort {
        what: &'static str,
        got: usize,
        need: usize,
    },

    #[error("gap of {missing} missing points starting at index {start} exceeds the interpolation limit (N = {span} > {max_gap})")]
    UncompletableGap {
        start: usize,
        missing: usize,
        span: usize,
        max_gap: usize,
    },

    #[error("position ({x:.4}, {y:.4}) lies outside the room")]
    OutsideRoom { x: f64, y: f64 },

    #[error("{0}")]
    Contract(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("corrupt container {}: {reason}", path.display())]
    CorruptContainer { path: PathBuf, reason: String },

    #[error("shape mismatch in {}: {reason}", path.display())]
    ShapeMismatch { path: PathBuf, reason: String },

    #[error("checkpoint does not match the requested architecture: {0}")]
    CheckpointMismatch(String),

    #[error("clip {id}: {source}")]
    Clip {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("gradient check failed for {group}: relative error {rel_err:.3e} > {tolerance:.1e}")]
    GradientCheck {
        group: String,
        rel_err: f64,
        tolerance: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
