//! Success counts, Wilson intervals and verdicts.

use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Vacuous,
}

/// Outcome of a batch of trials, each either satisfying the tested bound or
/// not. `bound_probability` is the guaranteed lower bound on the success
/// rate; `exact` checks require every trial to succeed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialStats {
    pub trials: u64,
    pub successes: u64,
    pub bound_probability: f64,
    pub empirical_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub verdict: Verdict,
}

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

impl TrialStats {
    fn base(trials: u64, successes: u64, bound_probability: f64, verdict: Verdict) -> Self {
        let (wilson_low, wilson_high) = wilson_interval(successes, trials, Z95);
        Self {
            trials,
            successes,
            bound_probability,
            empirical_rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            wilson_low,
            wilson_high,
            verdict,
        }
    }

    /// One-sided probabilistic check: passes unless the whole interval lies
    /// below the bound. A raw bound of at most zero says nothing and is
    /// reported as vacuous; bounds above one are clamped.
    pub fn probabilistic(trials: u64, successes: u64, raw_bound: f64) -> Self {
        let bound = raw_bound.clamp(0.0, 1.0);
        let mut s = Self::base(trials, successes, bound, Verdict::Pass);
        s.verdict = if !(raw_bound > 0.0) {
            Verdict::Vacuous
        } else if s.wilson_high >= bound {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        s
    }

    /// Deterministic check: passes only with zero failures.
    pub fn exact(trials: u64, successes: u64) -> Self {
        let verdict = if successes == trials { Verdict::Pass } else { Verdict::Fail };
        Self::base(trials, successes, 1.0, verdict)
    }

    pub fn failures(&self) -> u64 {
        self.trials - self.successes
    }
}
