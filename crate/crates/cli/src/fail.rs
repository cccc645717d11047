use std::fmt;
use std::process::ExitCode;

use wolbachia_core::Error;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or input files (exit 2).
    Usage(String),
    /// Infeasible problem, non-convergence or a failed run (exit 1).
    Run(String),
}

pub type Outcome<T> = Result<T, Failure>;

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    pub fn run(msg: impl Into<String>) -> Self {
        Failure::Run(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Usage(_) => ExitCode::from(2),
            Failure::Run(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Run(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownStrain(_) | Error::Parse(_) | Error::InvalidSchedule(_) | Error::InvalidParameter { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Run(e.to_string()),
        }
    }
}
