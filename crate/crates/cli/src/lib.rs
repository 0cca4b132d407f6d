//! Config-driven experiments over the `localsgd` core: variance sweeps,
//! schedule sweeps with bound verdicts, planners, and the acceptance suite.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod data;

use localsgd::dataio::DataError;
use localsgd::objective::ObjectiveError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{0}")]
    Failed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for failed checks and runtime failures, 2 for usage or config
    /// problems, 3 for missing or corrupt data.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ObjectiveError> for CliError {
    fn from(e: ObjectiveError) -> Self {
        match e {
            ObjectiveError::Data(d) => d.into(),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<localsgd::simulator::SimError> for CliError {
    fn from(e: localsgd::simulator::SimError) -> Self {
        match e {
            localsgd::simulator::SimError::Config(m) => CliError::Config(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<localsgd::theory::TheoryError> for CliError {
    fn from(e: localsgd::theory::TheoryError) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
