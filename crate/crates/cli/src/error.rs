use std::fmt;
use std::process::ExitCode;

use obsplace_core::{Error, ErrorKind};

/// Anything that ends a command early.
#[derive(Debug)]
pub enum CliError {
    Core(Error),
    /// Bad flag combination that clap cannot express.
    Usage(String),
    Output {
        path: String,
        message: String,
    },
}

impl CliError {
    /// 2 validation, 3 numerical failure, 4 guard violation, 1 otherwise.
    pub fn exit_code(&self) -> ExitCode {
        let code = match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Guard => 4,
                ErrorKind::Io => 1,
            },
            CliError::Usage(_) => 2,
            CliError::Output { .. } => 1,
        };
        ExitCode::from(code)
    }

    pub fn output(path: impl fmt::Display, err: impl fmt::Display) -> Self {
        CliError::Output {
            path: path.to_string(),
            message: err.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Output { path, message } => write!(f, "cannot write {path}: {message}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
