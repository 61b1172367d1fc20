use std::path::{Path, PathBuf};

/// Failures of the command-line pipeline.
///
/// Exit codes: 2 for configuration and input problems, 3 for numerical or
/// convergence diagnostics, 4 for filesystem failures.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] eled_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// A malformed row; `line` is 1-based and counts the header.
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },
    /// A structurally invalid file or argument.
    #[error("{context}: {msg}")]
    Invalid { context: String, msg: String },
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DIAGNOSTIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, line: u64, msg: impl Into<String>) -> Self {
        CliError::Parse { path: path.to_path_buf(), line, msg: msg.into() }
    }

    pub fn invalid(context: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError::Invalid { context: context.into(), msg: msg.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_user_error() => EXIT_VALIDATION,
            CliError::Core(_) => EXIT_DIAGNOSTIC,
            CliError::Io { .. } => EXIT_IO,
            CliError::Parse { .. } | CliError::Invalid { .. } => EXIT_VALIDATION,
        }
    }
}
