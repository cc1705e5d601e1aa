//! Error categories mapped to process exit codes.

use coevolve_core::{EvalError, EventError, PredictError, SimError, StateError, TrainError};
use std::fmt;

/// Exit codes: 2 config/usage, 3 data validation or IO, 4 numerical abort.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Config = 2,
    Data = 3,
    Numeric = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: ExitCode::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: ExitCode::Data,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: ExitCode::Numeric,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("io error: {e}"))
    }
}

impl From<EventError> for CliError {
    fn from(e: EventError) -> Self {
        CliError::data(format!("event log: {e}"))
    }
}

impl From<StateError> for CliError {
    fn from(e: StateError) -> Self {
        CliError::data(format!("replay: {e}"))
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::config(format!("simulation: {e}"))
    }
}

impl From<PredictError> for CliError {
    fn from(e: PredictError) -> Self {
        CliError::data(format!("prediction: {e}"))
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match &e {
            TrainError::NonFinite { .. } => CliError::numeric(format!("training: {e}")),
            TrainError::InvalidConfig(_) => CliError::config(format!("training: {e}")),
            _ => CliError::data(format!("training: {e}")),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match &e {
            EvalError::Train(TrainError::NonFinite { .. }) => {
                CliError::numeric(format!("evaluation: {e}"))
            }
            _ => CliError::data(format!("evaluation: {e}")),
        }
    }
}
