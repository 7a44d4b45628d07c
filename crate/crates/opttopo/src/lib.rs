//! File formats, reports and the command-line front end of `opttopo-core`.
//!
//! The usual workflow is one `solve` writing a table file and any number
//! of `lookup` runs against it; see the README for the command reference.

pub mod commands;
pub mod formats;
pub mod report;

use opttopo_core::baselines::BaselineError;
use opttopo_core::identification::FitError;
use opttopo_core::plan::PlanError;
use opttopo_core::{GraphError, SolveError};
use thiserror::Error;

pub use formats::FormatError;

/// Process exit codes. Kept stable; the README has the same table.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const PARSE: u8 = 4;
    pub const VERSION: u8 = 5;
    pub const CORRUPT_TABLE: u8 = 6;
    pub const CYCLE: u8 = 10;
    pub const DANGLING_FLOW: u8 = 11;
    pub const INVALID_GRAPH: u8 = 12;
    pub const INFEASIBLE: u8 = 20;
    pub const DISCRETIZATION: u8 = 21;
    pub const FIT: u8 = 30;
    pub const BASELINE: u8 = 31;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("invalid system: {0}")]
    Graph(#[from] GraphError),
    #[error("{0}")]
    Solve(#[from] SolveError),
    #[error("fit failed: {0}")]
    Fit(#[from] FitError),
    #[error("baseline failed: {0}")]
    Baseline(#[from] BaselineError),
    #[error("{0}")]
    Usage(String),
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        CliError::Solve(SolveError::Plan(e))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Format(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Format(FormatError::Io { .. }) => exit::IO,
            CliError::Format(FormatError::Version { .. }) => exit::VERSION,
            CliError::Format(FormatError::Table(_)) => exit::CORRUPT_TABLE,
            CliError::Format(_) => exit::PARSE,
            CliError::Graph(GraphError::CycleDetected(_)) => exit::CYCLE,
            CliError::Graph(GraphError::DanglingFlow { .. }) => exit::DANGLING_FLOW,
            CliError::Graph(_) => exit::INVALID_GRAPH,
            CliError::Solve(SolveError::Infeasible(_) | SolveError::EmptyTable(_)) => {
                exit::INFEASIBLE
            }
            CliError::Solve(SolveError::Corrupt(_)) => exit::CORRUPT_TABLE,
            CliError::Solve(SolveError::Plan(_)) => exit::DISCRETIZATION,
            CliError::Fit(_) => exit::FIT,
            CliError::Baseline(_) => exit::BASELINE,
            CliError::Usage(_) => exit::USAGE,
        }
    }
}
