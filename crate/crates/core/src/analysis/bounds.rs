//! Monte Carlo checks of the eigenvalue sandwich, the consensus bound and
//! the descent bound.

use rand::Rng;
use rayon::prelude::*;

use super::stats::TrialStats;
use crate::engine::{ndgd_step, sample_perturbation, Schedule};
use crate::error::{NdgdError, Result};
use crate::objectives::{consensus_error, LiftedPoint, ObjectiveSet};
use crate::rng::stream_rng;
use crate::topology::{sorted_eigenvalues, MixingMatrix};

/// Absolute slack of the sandwich comparisons.
pub const SANDWICH_SLACK: f64 = 1e-8;

/// How each trial picks its starting point.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialInit {
    /// Every block drawn independently from the certified box.
    RandomBox,
    /// One point drawn from the box, copied to every agent.
    RandomConsensual,
    Fixed(LiftedPoint),
}

fn initial_point<R: Rng + ?Sized>(obj: &ObjectiveSet, init: &TrialInit, rng: &mut R) -> LiftedPoint {
    let bx = &obj.constants().domain_box;
    match init {
        TrialInit::RandomBox => {
            let data = (0..obj.m()).flat_map(|_| bx.sample(rng)).collect();
            LiftedPoint::new(obj.m(), obj.n(), data).expect("box dimension matches")
        }
        TrialInit::RandomConsensual => LiftedPoint::consensual(obj.m(), &bx.sample(rng)),
        TrialInit::Fixed(x) => x.clone(),
    }
}

/// `(lambda_min(∇²F), lambda_min(∇²Q_alpha), lambda_min(Σ∇²f_i) / m)`.
pub fn sandwich_values(obj: &ObjectiveSet, w: &MixingMatrix, alpha: f64, x: &LiftedPoint) -> Result<(f64, f64, f64)> {
    let lower = obj.lambda_min_f_hessian(x)?;
    let middle = sorted_eigenvalues(&obj.q_hessian(w, alpha, x)?)?[0];
    let upper = obj.lambda_min_hessian_sum(x)? / obj.m() as f64;
    Ok((lower, middle, upper))
}

fn count<F>(trials: u64, f: F) -> Result<u64>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    (0..trials).into_par_iter().map(|i| f(i).map(u64::from)).try_reduce(|| 0, |a, b| Ok(a + b))
}

/// Random `x̂` in the box and log-uniform `alpha` in `[1e-3, 1e3]`; every
/// trial must satisfy both inequalities. Even trials start consensual.
pub fn eig_sandwich_check(obj: &ObjectiveSet, w: &MixingMatrix, trials: u64, seed: u64) -> Result<TrialStats> {
    if trials == 0 {
        return Err(NdgdError::Parameter("trials must be >= 1".into()));
    }
    let successes = count(trials, |i| {
        let mut rng = stream_rng(seed, i);
        let init = if i % 2 == 0 { TrialInit::RandomConsensual } else { TrialInit::RandomBox };
        let x = initial_point(obj, &init, &mut rng);
        let alpha = 10f64.powf(rng.random_range(-3.0..3.0));
        let (lo, mid, hi) = sandwich_values(obj, w, alpha, &x)?;
        Ok(lo <= mid + SANDWICH_SLACK && mid <= hi + SANDWICH_SLACK)
    })?;
    Ok(TrialStats::exact(trials, successes))
}

/// Runs NDGD for `horizon` steps per trial and requires
/// `||x̂^k - 1 ⊗ av(x̂^k)|| <= c^k ||x̂⁰ - 1 ⊗ av(x̂⁰)|| + zeta` at every
/// `k <= horizon`, with `c = lambda_2 + alpha L_g`. The guaranteed rate is
/// `1 - horizon e^{-rho}`.
pub fn consensus_bound_trial(
    obj: &ObjectiveSet,
    w: &MixingMatrix,
    schedule: &Schedule,
    horizon: usize,
    trials: u64,
    seed: u64,
    init: &TrialInit,
) -> Result<TrialStats> {
    if !(schedule.contraction < 1.0) {
        return Err(NdgdError::ScheduleInfeasible {
            rho: schedule.rho,
            contraction: schedule.contraction,
            required_rho: crate::engine::required_rho(schedule.spectral),
        });
    }
    let (m, n) = (obj.m(), obj.n());
    let successes = count(trials, |i| {
        let mut rng = stream_rng(seed, i);
        let mut x = initial_point(obj, init, &mut rng);
        let e0 = consensus_error(&x);
        let mut ok = true;
        for k in 1..=horizon {
            let noise = sample_perturbation(m, n, schedule.sigma, &mut rng);
            x = ndgd_step(obj, w, schedule.alpha, &x, &noise)?;
            if consensus_error(&x) > schedule.contraction.powi(k as i32) * e0 + schedule.zeta {
                ok = false;
                break;
            }
        }
        Ok(ok)
    })?;
    let bound = 1.0 - horizon as f64 * (-schedule.rho).exp();
    Ok(TrialStats::probabilistic(trials, successes, bound))
}

/// One NDGD stretch with the quantities entering the descent bound.
#[derive(Debug, Clone)]
pub struct DescentRecord {
    pub iterates: Vec<LiftedPoint>,
    pub q_values: Vec<f64>,
    /// `Σ_{k<t} ||∇Q_alpha(x̂^k)||²`, accumulated during the run.
    pub grad_sq_sum: f64,
}

impl DescentRecord {
    /// `Σ_{k<t} ||∇Q_alpha(x̂^k)||²` recomputed from the stored iterates.
    pub fn recompute_grad_sq_sum(&self, obj: &ObjectiveSet, w: &MixingMatrix, alpha: f64) -> Result<f64> {
        let mut s = 0.0;
        for x in &self.iterates[..self.iterates.len() - 1] {
            let (_, g) = obj.q_value_grad(w, alpha, x)?;
            s += g.iter().map(|v| v * v).sum::<f64>();
        }
        Ok(s)
    }

    /// `Q(x̂^t) - Q(x̂⁰)`.
    pub fn q_change(&self) -> f64 {
        self.q_values[self.q_values.len() - 1] - self.q_values[0]
    }
}

pub fn descent_record<R: Rng + ?Sized>(
    obj: &ObjectiveSet,
    w: &MixingMatrix,
    alpha: f64,
    sigma: f64,
    x0: &LiftedPoint,
    steps: usize,
    rng: &mut R,
) -> Result<DescentRecord> {
    let mut iterates = Vec::with_capacity(steps + 1);
    let mut q_values = Vec::with_capacity(steps + 1);
    let mut grad_sq_sum = 0.0;
    let mut x = x0.clone();
    for _ in 0..steps {
        let (q, g) = obj.q_value_grad(w, alpha, &x)?;
        q_values.push(q);
        grad_sq_sum += g.iter().map(|v| v * v).sum::<f64>();
        let noise = sample_perturbation(obj.m(), obj.n(), sigma, rng);
        let next = ndgd_step(obj, w, alpha, &x, &noise)?;
        iterates.push(std::mem::replace(&mut x, next));
    }
    q_values.push(obj.q_value_grad(w, alpha, &x)?.0);
    iterates.push(x);
    Ok(DescentRecord { iterates, q_values, grad_sq_sum })
}

/// `-(alpha/2) Σ||∇Q||² + mn alpha sigma² (t + sqrt(t rho) + rho)`.
pub fn descent_bound(alpha: f64, sigma: f64, rho: f64, m: usize, n: usize, t: usize, grad_sq_sum: f64) -> f64 {
    let t = t as f64;
    -0.5 * alpha * grad_sq_sum + (m * n) as f64 * alpha * sigma * sigma * (t + (t * rho).sqrt() + rho)
}

/// Per trial, `t` NDGD steps from a random start; success iff
/// `Q(x̂^t) - Q(x̂⁰)` stays below [`descent_bound`]. Guaranteed rate
/// `1 - 2e^{-rho}`.
pub fn descent_bound_trial(
    obj: &ObjectiveSet,
    w: &MixingMatrix,
    schedule: &Schedule,
    t: usize,
    trials: u64,
    seed: u64,
) -> Result<TrialStats> {
    if schedule.alpha * schedule.q_lipschitz() > 1.0 + 1e-12 {
        return Err(NdgdError::Precondition(format!(
            "step size {} exceeds 1 / L_Q = {}",
            schedule.alpha,
            1.0 / schedule.q_lipschitz()
        )));
    }
    let (m, n) = (obj.m(), obj.n());
    let successes = count(trials, |i| {
        let mut rng = stream_rng(seed, i);
        let x0 = initial_point(obj, &TrialInit::RandomBox, &mut rng);
        let rec = descent_record(obj, w, schedule.alpha, schedule.sigma, &x0, t, &mut rng)?;
        Ok(rec.q_change() <= descent_bound(schedule.alpha, schedule.sigma, schedule.rho, m, n, t, rec.grad_sq_sum))
    })?;
    Ok(TrialStats::probabilistic(trials, successes, 1.0 - 2.0 * (-schedule.rho).exp()))
}
