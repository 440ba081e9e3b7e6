//! Experiment harness: run configurations, trace files and the acceptance
//! suites behind the command-line tool.

pub mod config;
pub mod run;
pub mod verify;

use thiserror::Error;

pub use config::{Algorithm, CompletionSpec, ProblemSpec, RunConfig, RunOverrides};
pub use run::{build_problem, execute, run, Problem, RunSummary};
pub use verify::{verify, Criterion, Report, Suite};

/// Configuration and output failures. Algorithmic non-convergence is never an
/// error; it shows up as flags and counters in the trace.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Unreadable { .. } => 10,
            HarnessError::Schema(_) => 11,
            HarnessError::Infeasible(_) => 12,
            HarnessError::Output { .. } => 13,
        }
    }
}

impl From<crate::Error> for HarnessError {
    fn from(e: crate::Error) -> Self {
        HarnessError::Infeasible(e.to_string())
    }
}
