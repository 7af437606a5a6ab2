use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid room: {0}")]
    InvalidRoom(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mode count exceeds the configured cap of {cap} (cutoff {f_cutoff} Hz)")]
    TooManyModes { cap: usize, f_cutoff: f64 },

    #[error("degenerate modal denominator for mode {index:?} at omega = {omega} rad/s")]
    DegenerateDenominator { index: [u32; 3], omega: f64 },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("room sampling exceeded its rejection budget of {0} draws")]
    RejectionBudget(usize),

    #[error("non-finite value at (w={w}, h={h}, k={k})")]
    NonFinite { w: usize, h: usize, k: usize },

    #[error("payload length mismatch: header implies {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("SPD factorization failed (condition estimate {condition:.3e})")]
    Factorization { condition: f64 },

    #[error("target field has zero energy at frequency index {0}")]
    ZeroEnergy(usize),

    #[error("reconstruction failed: {0}")]
    Reconstruction(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
