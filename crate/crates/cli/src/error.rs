use std::fmt;
use std::process::ExitCode;

use ijscc::codec::ArtifactError;
use ijscc::optimizer::TrainError;
use ijscc::pnm::PnmError;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration values (exit 1).
    Usage(String),
    /// Unreadable or malformed input file (exit 2).
    Parse(String),
    /// The requested bandwidth budget cannot be met (exit 3).
    Infeasible(String),
    /// Optimisation blew up (exit 4).
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Diverged(_) => 4,
        })
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        CliError::Parse(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible budget: {m}"),
            CliError::Diverged(m) => write!(f, "diverged: {m}"),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Infeasible(m) => CliError::Infeasible(m),
            TrainError::Diverged { .. } | TrainError::NonFinite { .. } => {
                CliError::Diverged(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<PnmError> for CliError {
    fn from(e: PnmError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(format!("cannot write CSV: {e}"))
    }
}

/// Attaches a path to an I/O error. Reads are input errors, writes are not.
pub fn read_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Parse(format!("{}: {e}", path.display()))
}

pub fn write_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Usage(format!("cannot write {}: {e}", path.display()))
}
