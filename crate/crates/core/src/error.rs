use thiserror::Error;

/// Errors surfaced by the library. Diagnostics routines never error; they
/// report. Errors are reserved for contract violations (shapes, ranges,
/// parse failures) and non-finite numerics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at step {step}: {detail}")]
    DimensionMismatch { step: usize, detail: String },

    #[error("invalid coefficient at (t={t}, n={n}): {reason}")]
    InvalidCoefficient { t: usize, n: usize, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value produced by tape operation {op_index}")]
    NonFinite { op_index: usize },

    #[error("loss mask is empty: no supervised positions in batch")]
    EmptyMask,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(format!("{e}"))
    }
}
