use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] tsr_core::Error),
    #[error("{} check(s) failed: {}", .0.len(), .0.join("; "))]
    Check(Vec<String>),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit code: 2 configuration, 3 failed check, 4 I/O, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                tsr_core::Error::Config(_)
                | tsr_core::Error::Parameter(_)
                | tsr_core::Error::Domain { .. }
                | tsr_core::Error::Dimension { .. }
                | tsr_core::Error::UnsupportedSchedule(_)
                | tsr_core::Error::UnsupportedRegime(_)
                | tsr_core::Error::PolicyMisuse(_) => 2,
                tsr_core::Error::DegenerateSchedule(_) => 1,
            },
            CliError::Check(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
