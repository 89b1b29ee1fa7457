use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigIssue;

/// Errors raised by the simulator and the verification suites.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} must be nonnegative, got {value}")]
    NegativeArgument { what: &'static str, value: f64 },

    #[error("regularization parameter eps must lie in (0,1), got {0}")]
    EpsOutOfRange(f64),

    #[error("timestep too large: {0}")]
    TimestepTooLarge(String),

    #[error("poisson solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    PoissonNotConverged { residual: f64, iterations: usize },

    #[error("missing Trudinger-Moser calibration constant")]
    MissingCalibration,

    #[error("psi must be strictly positive (min {0})")]
    NonPositivePsi(f64),

    #[error("weight a must be positive, got {0}")]
    NonPositiveA(f64),

    #[error("test function must be nonnegative (min {0})")]
    TestNotNonnegative(f64),

    #[error("stream function does not vanish on the boundary collar (max |stream| = {0:e})")]
    CollarTooThin(f64),

    #[error("test support [0,{support}] exceeds trajectory end {end}")]
    SupportExceedsTrajectory { support: f64, end: f64 },

    #[error("trajectories do not share an output cadence")]
    CadenceMismatch,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("configuration error:\n{}", format_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;
