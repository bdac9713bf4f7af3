use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: parse error at {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    #[error("{path}: measurement {index} ('{label}') violates {invariant}")]
    Validation {
        path: String,
        index: usize,
        label: String,
        invariant: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] incompat_core::error::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;

impl CliError {
    /// 2 for numerical failures, 1 for everything the caller can fix.
    pub fn exit_code(&self) -> i32 {
        use incompat_core::error::Error as E;
        match self {
            CliError::Core(E::SolverFailure(_) | E::NoConvergence(_) | E::NonMonotone(_)) => EXIT_SOLVER,
            _ => EXIT_USAGE,
        }
    }
}
