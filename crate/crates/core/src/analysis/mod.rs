//! Empirical checks of the bounds behind the convergence guarantees.

mod bounds;
mod concentration;
mod coupling;
mod stats;

use nalgebra::DVector;
use serde::Serialize;

pub use bounds::{
    consensus_bound_trial, descent_bound, descent_bound_trial, descent_record, eig_sandwich_check, sandwich_values,
    DescentRecord, TrialInit, SANDWICH_SLACK,
};
pub use concentration::{chi_square_tail_check, relaxed_azuma_trial, SyntheticProcess, JUMP_WALK_CUTOFF};
pub use coupling::{decompose, decomposition_check, evolve_coupling, gauss_legendre, CouplingPair, Decomposition};
pub use stats::{wilson_interval, TrialStats, Verdict, Z95};

use crate::error::{NdgdError, Result};

/// Euclidean distance from `x` to the nearest point of `set`.
pub fn distance_to_set(x: &[f64], set: &[DVector<f64>]) -> Result<f64> {
    if set.is_empty() {
        return Err(NdgdError::Parameter("distance to an empty set".into()));
    }
    if set.iter().any(|p| p.len() != x.len()) {
        return Err(NdgdError::Parameter("dimension mismatch".into()));
    }
    Ok(set
        .iter()
        .map(|p| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min))
}

/// One line of a verification report. Rates and bounds refer to the
/// probability that a trial satisfies the tested inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub check_name: String,
    /// Statement being checked.
    pub paper_ref: String,
    pub trials: u64,
    pub empirical_rate: f64,
    pub bound: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub verdict: Verdict,
}

impl ReportEntry {
    pub fn new(check_name: impl Into<String>, statement: impl Into<String>, stats: &TrialStats) -> Self {
        Self {
            check_name: check_name.into(),
            paper_ref: statement.into(),
            trials: stats.trials,
            empirical_rate: stats.empirical_rate,
            bound: stats.bound_probability,
            wilson_low: stats.wilson_low,
            wilson_high: stats.wilson_high,
            verdict: stats.verdict,
        }
    }
}

pub fn report_json(entries: &[ReportEntry]) -> String {
    serde_json::to_string_pretty(entries).expect("report serializes")
}
