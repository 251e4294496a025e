//! Error and warning types shared across the crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violates a documented precondition.
    Domain(String),
    /// Vector or matrix dimensions do not line up.
    Dimension(String),
    /// A linear-algebra step failed (rank-deficient design, non-PSD matrix).
    Linalg(String),
    /// Every particle's moment value shares one sign: no tilting parameter
    /// can zero the weighted mean.
    InfeasibleConstraint { mean_moment: f64 },
    /// The tilting solver ran out of iterations or schedule steps.
    NonConvergence { lambda: f64, residual: f64 },
    /// A propensity-score stratum has no treated or no control units.
    StratumDegenerate { stratum: usize },
    /// Confounder selection kept no covariates at the given threshold.
    EmptySelection { threshold: f64 },
    /// Reweighting produced weights that all underflowed.
    DegenerateReweight(String),
    /// Too many bootstrap replicates or simulation replications failed.
    TooManyFailures { failed: usize, total: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::Linalg(msg) => write!(f, "linear algebra error: {msg}"),
            Error::InfeasibleConstraint { mean_moment } => write!(
                f,
                "infeasible constraint: all moment values share one sign (mean {mean_moment})"
            ),
            Error::NonConvergence { lambda, residual } => write!(
                f,
                "tilting did not converge: last lambda {lambda}, residual {residual}"
            ),
            Error::StratumDegenerate { stratum } => write!(
                f,
                "stratum {stratum} has no treated or no control units"
            ),
            Error::EmptySelection { threshold } => write!(
                f,
                "no covariates selected at threshold {threshold}; lower the threshold"
            ),
            Error::DegenerateReweight(msg) => write!(f, "degenerate reweighting: {msg}"),
            Error::TooManyFailures { failed, total } => {
                write!(f, "{failed} of {total} replicates failed")
            }
        }
    }
}

/// Non-fatal diagnostics attached to sampler or solver output.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Metropolis acceptance rate left the healthy band after adaptation.
    AcceptanceRate { rate: f64 },
    /// Coefficients drifted far enough to suggest perfect separation.
    PossibleSeparation { max_abs_coef: f64 },
    /// Effective sample size of the tilted weights collapsed.
    DegenerateTiltWeights { ess: f64, particles: usize },
    /// Bootstrap replicates were skipped (fit failures).
    SkippedReplicates { skipped: usize, total: usize },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::AcceptanceRate { rate } => {
                write!(f, "Metropolis acceptance rate {rate:.3} outside [0.05, 0.8]")
            }
            Warning::PossibleSeparation { max_abs_coef } => {
                write!(f, "possible separation: max |coefficient| = {max_abs_coef:.1}")
            }
            Warning::DegenerateTiltWeights { ess, particles } => {
                write!(f, "tilted weights are degenerate: ESS {ess:.1} of {particles}")
            }
            Warning::SkippedReplicates { skipped, total } => {
                write!(f, "{skipped} of {total} replicates skipped")
            }
        }
    }
}

/// Collects warnings in generation order without duplicates.
pub(crate) fn push_warning(warnings: &mut Vec<Warning>, w: Warning) {
    if !warnings.contains(&w) {
        warnings.push(w);
    }
}
