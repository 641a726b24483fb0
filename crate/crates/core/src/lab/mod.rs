//! Experiment runner: configuration, suites and reports.

pub mod config;
pub mod report;
pub mod spec;
pub mod suite;

use thiserror::Error;

use crate::bsde::SolveError;
use crate::choquet::ChoquetError;
use crate::claims::ClaimError;
use crate::generators::GeneratorError;
use crate::lattice::LatticeError;
use crate::oracles::OracleError;

pub use config::{SuiteConfig, SuiteKind, Tolerances, Witness};
pub use report::{emit_report, Format, ReportError, ReportRow, SuiteReport, Verdict};
pub use spec::{ClaimExpr, CoordinateMap, GeneratorSpec};
pub use suite::{compare, oracle_value, rotation_reduction_check, run_divergence_suite, run_equivalence_suite, run_suite};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("cannot parse `{input}`: {message}")]
    Parse { input: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Claim(#[from] ClaimError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Choquet(#[from] ChoquetError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Report(#[from] ReportError),
}
