//! Exit-code discipline: every failure is classified by the phase it
//! happened in, not by its type, so scripted callers can branch on it.

use std::process::ExitCode;

/// Failure phase, one distinct exit code each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Bad configuration or command line.
    Config,
    /// Unreadable or malformed data, or an output the run could not write.
    Data,
    /// The run itself failed numerically.
    Run,
}

impl Phase {
    pub fn exit_code(self) -> ExitCode {
        match self {
            Phase::Config => ExitCode::from(2),
            Phase::Data => ExitCode::from(3),
            Phase::Run => ExitCode::from(4),
        }
    }
}

/// A classified failure carrying its causal chain.
#[derive(Debug)]
pub struct CliError {
    pub phase: Phase,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { phase: Phase::Config, error: anyhow::anyhow!(msg.into()) }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { phase: Phase::Data, error: anyhow::anyhow!(msg.into()) }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attach a phase to any error-carrying result.
pub trait Classify<T> {
    fn phase(self, phase: Phase) -> CliResult<T>;
    fn phase_ctx(self, phase: Phase, ctx: &str) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn phase(self, phase: Phase) -> CliResult<T> {
        self.map_err(|e| CliError { phase, error: e.into() })
    }

    fn phase_ctx(self, phase: Phase, ctx: &str) -> CliResult<T> {
        self.map_err(|e| CliError { phase, error: e.into().context(ctx.to_string()) })
    }
}
