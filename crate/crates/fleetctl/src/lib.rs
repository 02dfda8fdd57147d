//! Campaign orchestration for the fleetbench toolkit: config resolution,
//! probe job plans, inbox collection, and the aggregate/report drivers.

pub mod collect;
pub mod commands;
pub mod config;
pub mod plan;

use thiserror::Error;

/// CLI failure classes; they map onto exit codes (usage = 1, data = 2).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<fleetbench::results::ResultsError> for CliError {
    fn from(e: fleetbench::results::ResultsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<fleetbench::aggregate::AggregateError> for CliError {
    fn from(e: fleetbench::aggregate::AggregateError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<fleetbench::inventory::InventoryError> for CliError {
    fn from(e: fleetbench::inventory::InventoryError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<fleetbench::report::ReportError> for CliError {
    fn from(e: fleetbench::report::ReportError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<fleetbench::timing::TimingError> for CliError {
    fn from(e: fleetbench::timing::TimingError) -> Self {
        CliError::Data(e.to_string())
    }
}
