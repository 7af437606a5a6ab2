use std::path::PathBuf;

use rtf_core::Error as CoreError;
use rtf_cvnn::NetError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Net(#[from] NetError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Render { path: PathBuf, message: String },
}

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

fn core_code(e: &CoreError) -> i32 {
    match e {
        CoreError::InvalidRoom(_) | CoreError::InvalidArgument(_) | CoreError::RejectionBudget(_) => EXIT_USAGE,
        CoreError::TooManyModes { .. }
        | CoreError::DegenerateDenominator { .. }
        | CoreError::NonFinite { .. }
        | CoreError::Factorization { .. }
        | CoreError::Reconstruction(_) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => core_code(e),
            CliError::Net(e) => match e {
                NetError::Config(_) => EXIT_USAGE,
                NetError::NonFinite(_) => EXIT_NUMERICAL,
                NetError::Core(e) => core_code(e),
                _ => EXIT_DATA,
            },
            CliError::Io { .. } | CliError::Render { .. } => EXIT_DATA,
        }
    }
}
