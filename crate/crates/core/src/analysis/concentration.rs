//! Chi-square tails and the relaxed Azuma inequality on synthetic
//! processes.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::erf::erfc;

use super::stats::TrialStats;
use crate::error::{NdgdError, Result};
use crate::rng::stream_rng;

/// Samples per independent stream in the bulk checks.
const CHUNK: u64 = 1 << 16;

fn chunked_count<F>(trials: u64, seed: u64, per_sample: F) -> (u64, u64)
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> (bool, bool) + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let len = CHUNK.min(trials - c * CHUNK);
            let mut acc = (0, 0);
            for _ in 0..len {
                let (a, b) = per_sample(&mut rng);
                acc.0 += u64::from(a);
                acc.1 += u64::from(b);
            }
            acc
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Upper and lower tails of `U ~ χ²_D`:
/// `P[U - D >= 2 sqrt(D x) + 2x] <= e^{-x}` and `P[D - U >= 2 sqrt(D x)] <= e^{-x}`.
///
/// Each is reported as the rate of samples outside the tail against the
/// bound `1 - e^{-x}`.
pub fn chi_square_tail_check(dof: u32, x: f64, trials: u64, seed: u64) -> Result<(TrialStats, TrialStats)> {
    if dof == 0 || !(x > 0.0) || trials == 0 {
        return Err(NdgdError::Parameter(format!("need D >= 1, x > 0, trials >= 1; got {dof}, {x}, {trials}")));
    }
    let d = dof as f64;
    let dist = ChiSquared::new(d).map_err(|e| NdgdError::Parameter(e.to_string()))?;
    let up = d + 2.0 * (d * x).sqrt() + 2.0 * x;
    let down = d - 2.0 * (d * x).sqrt();
    let (upper_ok, lower_ok) = chunked_count(trials, seed, |rng| {
        let u: f64 = dist.sample(rng);
        (u < up, u > down)
    });
    let bound = 1.0 - (-x).exp();
    Ok((TrialStats::probabilistic(trials, upper_ok, bound), TrialStats::probabilistic(trials, lower_ok, bound)))
}

/// Processes with known constants for the relaxed Azuma inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticProcess {
    /// `X^k = 0`.
    Zero { steps: usize },
    /// Symmetric ±1 steps.
    BoundedWalk { steps: usize },
    /// Standard normal steps plus a centred jump `J (B - q)`, `B ~ Bernoulli(q)`.
    JumpWalk { steps: usize, jump: f64, jump_prob: f64 },
}

/// Cut-off of the Gaussian part of a jump-walk increment.
pub const JUMP_WALK_CUTOFF: f64 = 3.0;

impl SyntheticProcess {
    pub fn steps(&self) -> usize {
        match *self {
            Self::Zero { steps } | Self::BoundedWalk { steps } | Self::JumpWalk { steps, .. } => steps,
        }
    }

    /// `(sigma_k², a_k, M, p_k)`, identical for every step.
    pub fn constants(&self) -> (f64, f64, f64, f64) {
        match *self {
            Self::Zero { .. } => (0.0, 0.0, 0.0, 0.0),
            Self::BoundedWalk { .. } => (1.0, 1.0, 0.0, 0.0),
            Self::JumpWalk { jump, jump_prob, .. } => {
                let var = 1.0 + jump * jump * jump_prob * (1.0 - jump_prob);
                // exceeding a + M needs a jump or a Gaussian step above the cut-off
                let p = jump_prob + 0.5 * erfc(JUMP_WALK_CUTOFF / std::f64::consts::SQRT_2);
                (var, 1.0, JUMP_WALK_CUTOFF - 1.0, p)
            }
        }
    }

    /// `exp(-λ² / (2 (Σ(σ_k² + a_k²) + Mλ/3))) + Σ p_k`.
    pub fn tail_bound(&self, lambda: f64) -> f64 {
        let t = self.steps() as f64;
        let (var, a, big_m, p) = self.constants();
        let denom = 2.0 * (t * (var + a * a) + big_m * lambda / 3.0);
        let main = if denom > 0.0 { (-lambda * lambda / denom).exp() } else { 0.0 };
        main + t * p
    }

    /// `X^t - X⁰` for one path.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Zero { .. } => 0.0,
            Self::BoundedWalk { steps } => {
                let mut sum = 0i64;
                let mut left = steps;
                while left > 0 {
                    let take = left.min(64);
                    let bits: u64 = rng.random();
                    let mask = if take == 64 { u64::MAX } else { (1u64 << take) - 1 };
                    sum += 2 * i64::from((bits & mask).count_ones()) - take as i64;
                    left -= take;
                }
                sum as f64
            }
            Self::JumpWalk { steps, jump, jump_prob } => (0..steps)
                .map(|_| {
                    let g: f64 = rng.sample(StandardNormal);
                    let b = if rng.random::<f64>() < jump_prob { 1.0 } else { 0.0 };
                    g + jump * (b - jump_prob)
                })
                .sum(),
        }
    }
}

/// Rate of paths with `X^t < X⁰ + λ` against `1 - tail_bound(λ)`.
pub fn relaxed_azuma_trial(process: &SyntheticProcess, lambda: f64, trials: u64, seed: u64) -> Result<TrialStats> {
    if !(lambda > 0.0) || trials == 0 {
        return Err(NdgdError::Parameter(format!("need lambda > 0 and trials >= 1; got {lambda}, {trials}")));
    }
    let (ok, _) = chunked_count(trials, seed, |rng| (process.simulate(rng) < lambda, false));
    Ok(TrialStats::probabilistic(trials, ok, 1.0 - process.tail_bound(lambda)))
}
