//! Multi-step runs with per-iteration diagnostics.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schedule::{Schedule, StationarityThresholds};
use super::step::{dgd_step, gdq_step, ndgd_step, sample_perturbation};
use crate::error::{NdgdError, Result};
use crate::objectives::{av, consensus_error, LiftedPoint, ObjectiveSet};
use crate::rng::{stream_rng, word_pos};
use crate::topology::MixingMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dgd,
    Ndgd,
    Gdq,
}

impl std::str::FromStr for Algorithm {
    type Err = NdgdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dgd" => Ok(Self::Dgd),
            "ndgd" => Ok(Self::Ndgd),
            "gdq" => Ok(Self::Gdq),
            other => Err(NdgdError::Parameter(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Where the step size and noise level come from.
#[derive(Debug, Clone, PartialEq)]
pub enum StepParams {
    /// `alpha`, `sigma` from the schedule; the run is also capped at `K`.
    Schedule(Schedule),
    Manual {
        alpha: f64,
        sigma: f64,
    },
}

impl StepParams {
    pub fn alpha(&self) -> f64 {
        match self {
            Self::Schedule(s) => s.alpha,
            Self::Manual { alpha, .. } => *alpha,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Self::Schedule(s) => s.sigma,
            Self::Manual { sigma, .. } => *sigma,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub x0: LiftedPoint,
    pub max_iters: usize,
    /// Master seed and run index; together they select the noise stream.
    pub seed: u64,
    pub stream: u64,
    /// Rows are recorded at `k = 0, r, 2r, ...` and at the last iterate.
    pub record_every: usize,
    pub stop_on_stationarity: Option<StationarityThresholds>,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, x0: LiftedPoint, max_iters: usize, seed: u64) -> Self {
        Self { algorithm, x0, max_iters, seed, stream: 0, record_every: 1, stop_on_stationarity: None }
    }
}

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub consensus_error: f64,
    pub grad_q_norm: f64,
    pub q_value: f64,
    /// `||Σ_i ∇f_i(x̂_i)||`.
    pub grad_sum_norm: f64,
    /// `lambda_min(Σ_i ∇²f_i(x̂_i))`.
    pub lmin_hess_sum: f64,
    /// Distance of each agent to the minimizer set, NaN when unknown.
    pub dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub final_point: LiftedPoint,
    /// Number of iterations actually taken.
    pub iterations: usize,
    pub stopped_early: bool,
    pub alpha: f64,
    pub sigma: f64,
    pub seed: u64,
    pub stream: u64,
    /// Position of the noise stream after the run.
    pub rng_word_pos: u128,
}

impl RunTrace {
    /// SHA-256 over every recorded value, the final point and the noise
    /// stream position. Equal digests mean bit-identical runs.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.rows {
            h.update((r.k as u64).to_le_bytes());
            for v in
                [r.consensus_error, r.grad_q_norm, r.q_value, r.grad_sum_norm, r.lmin_hess_sum].iter().chain(&r.dist)
            {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        for v in self.final_point.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update((self.iterations as u64).to_le_bytes());
        h.update(self.rng_word_pos.to_le_bytes());
        hex::encode(h.finalize())
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

/// Diagnostics of [`check_consensual_stationarity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityReport {
    pub consensus_error: f64,
    pub grad_sum_norm: f64,
    pub lmin_hess_sum: f64,
    pub consensual: bool,
    pub first_order: bool,
    pub second_order: bool,
}

impl StationarityReport {
    pub fn satisfied(&self) -> bool {
        self.consensual && self.first_order && self.second_order
    }
}

/// `x̂` is `(eta, eps, gamma)`-consensual second-order stationary when
/// `||x̂ - 1 ⊗ av(x̂)|| <= eta`, `||Σ∇f_i(x̂_i)|| <= eps` and
/// `lambda_min(Σ∇²f_i(x̂_i)) >= -gamma`. Infinite thresholds disable a test.
pub fn check_consensual_stationarity(
    obj: &ObjectiveSet,
    x: &LiftedPoint,
    thresholds: StationarityThresholds,
) -> Result<StationarityReport> {
    let StationarityThresholds { eta, eps, gamma } = thresholds;
    if !(eta > 0.0 && eps > 0.0 && gamma > 0.0) {
        return Err(NdgdError::Parameter(format!("thresholds must be positive, got ({eta}, {eps}, {gamma})")));
    }
    if x.m() != obj.m() || x.n() != obj.n() {
        return Err(NdgdError::Parameter("point shape does not match objective".into()));
    }
    let ce = consensus_error(x);
    let gs = obj.gradient_sum(x).norm();
    let lh = obj.lambda_min_hessian_sum(x)?;
    Ok(StationarityReport {
        consensus_error: ce,
        grad_sum_norm: gs,
        lmin_hess_sum: lh,
        consensual: ce <= eta,
        first_order: gs <= eps,
        second_order: lh >= -gamma,
    })
}

fn record(obj: &ObjectiveSet, w: &MixingMatrix, alpha: f64, k: usize, x: &LiftedPoint) -> Result<TraceRow> {
    let (q_value, grad_q) = obj.q_value_grad(w, alpha, x)?;
    // huge but finite iterates can overflow the Hessian; the row still records
    let lmin = obj.lambda_min_hessian_sum(x).unwrap_or(f64::NAN);
    Ok(TraceRow {
        k,
        consensus_error: consensus_error(x),
        grad_q_norm: grad_q.iter().map(|g| g * g).sum::<f64>().sqrt(),
        q_value,
        grad_sum_norm: obj.gradient_sum(x).norm(),
        lmin_hess_sum: lmin,
        dist: obj.agent_distances(x).unwrap_or_else(|| vec![f64::NAN; x.m()]),
    })
}

/// Runs the chosen algorithm from `config.x0`.
///
/// Noise is only drawn for [`Algorithm::Ndgd`], from stream
/// `(config.seed, config.stream)`. A non-finite iterate aborts with
/// [`NdgdError::Diverged`] carrying the trace up to the last finite iterate.
pub fn run(config: &RunConfig, obj: &ObjectiveSet, w: &MixingMatrix, params: &StepParams) -> Result<RunTrace> {
    let (alpha, sigma) = (params.alpha(), params.sigma());
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(NdgdError::Parameter(format!("step size must be positive, got {alpha}")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(NdgdError::Parameter(format!("noise level must be >= 0, got {sigma}")));
    }
    if config.record_every == 0 {
        return Err(NdgdError::Parameter("record_every must be >= 1".into()));
    }
    if config.x0.m() != obj.m() || config.x0.n() != obj.n() || w.m() != obj.m() {
        return Err(NdgdError::Parameter("initial point, objective and mixing matrix disagree on shape".into()));
    }
    if !config.x0.is_finite() {
        return Err(NdgdError::Parameter("initial point is not finite".into()));
    }
    let budget = match params {
        StepParams::Schedule(s) => s.cap(config.max_iters),
        StepParams::Manual { .. } => config.max_iters,
    };
    let (m, n) = (obj.m(), obj.n());
    let mut rng = stream_rng(config.seed, config.stream);
    let mut x = config.x0.clone();
    let mut rows = vec![record(obj, w, alpha, 0, &x)?];
    let mut k = 0;
    let mut stopped_early = false;

    let stationary = |x: &LiftedPoint| -> Result<bool> {
        match config.stop_on_stationarity {
            Some(t) => Ok(check_consensual_stationarity(obj, x, t)?.satisfied()),
            None => Ok(false),
        }
    };
    if stationary(&x)? {
        stopped_early = true;
    }

    while !stopped_early && k < budget {
        let next = match config.algorithm {
            Algorithm::Dgd => dgd_step(obj, w, alpha, &x)?,
            Algorithm::Gdq => gdq_step(obj, w, alpha, &x)?,
            Algorithm::Ndgd => {
                let noise = sample_perturbation(m, n, sigma, &mut rng);
                ndgd_step(obj, w, alpha, &x, &noise)?
            }
        };
        k += 1;
        if !next.is_finite() {
            let trace = RunTrace {
                rows,
                final_point: x,
                iterations: k - 1,
                stopped_early: false,
                alpha,
                sigma,
                seed: config.seed,
                stream: config.stream,
                rng_word_pos: word_pos(&rng),
            };
            return Err(NdgdError::Diverged { k, trace: Box::new(trace) });
        }
        x = next;
        stopped_early = stationary(&x)?;
        if k % config.record_every == 0 || k == budget || stopped_early {
            rows.push(record(obj, w, alpha, k, &x)?);
        }
    }
    Ok(RunTrace {
        rows,
        final_point: x,
        iterations: k,
        stopped_early,
        alpha,
        sigma,
        seed: config.seed,
        stream: config.stream,
        rng_word_pos: word_pos(&rng),
    })
}

/// First recorded iteration at which every agent is within `fraction` of
/// the largest initial agent distance to the minimizer set. `None` if that
/// never happens, distances are unknown, or the run started on the set.
pub fn escape_iteration(rows: &[TraceRow], fraction: f64) -> Option<usize> {
    let first = rows.first()?;
    let d0 = max_dist(&first.dist)?;
    if !(d0 > 0.0) {
        return None;
    }
    rows.iter().find(|r| max_dist(&r.dist).is_some_and(|d| d < fraction * d0)).map(|r| r.k)
}

fn max_dist(d: &[f64]) -> Option<f64> {
    if d.is_empty() || d.iter().any(|v| v.is_nan()) {
        return None;
    }
    Some(d.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// `av(x̂)` of the final iterate.
pub fn final_average(trace: &RunTrace) -> Vec<f64> {
    av(&trace.final_point).iter().copied().collect()
}
