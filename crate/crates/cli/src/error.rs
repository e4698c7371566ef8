use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] kolmo_core::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("acceptance failed: {0}")]
    Acceptance(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 1 for bad input, 2 for numerical failures, 3 for failed acceptance.
    pub fn exit_code(&self) -> i32 {
        use kolmo_core::Error as E;
        match self {
            CliError::Validation(_) => 1,
            CliError::Core(e) => match e {
                E::Domain(_)
                | E::Geometry(_)
                | E::Exponent(_)
                | E::Precondition(_)
                | E::Kernel(_)
                | E::Constraint(_)
                | E::Localization(_)
                | E::Refused(_) => 1,
                E::Cfl { .. } | E::Numerical { .. } | E::Evaluation(_) | E::Resolution(_) | E::NoConvergence(_) | E::Io(_) => 2,
            },
            CliError::Io { .. } => 2,
            CliError::Acceptance(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Core(_) => "core",
            CliError::Io { .. } => "io",
            CliError::Acceptance(_) => "acceptance",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
