//! Step size, noise level, consensus bound and iteration count as functions
//! of the confidence parameter `rho`.

use num_bigint::BigUint;
use num_traits::{FromPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{NdgdError, Result};
use crate::objectives::RegularityConstants;
use crate::topology::Spectral;

/// All `rho`-derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub rho: f64,
    /// `lambda_min(W) / (L_g sqrt(rho))`.
    pub alpha: f64,
    /// `alpha / (40 sqrt(mn) L_H rho³)`.
    pub sigma: f64,
    /// Consensus error bound, see [`consensus_bound`].
    pub zeta: f64,
    /// Geometric consensus rate `lambda_2 + alpha L_g`.
    pub contraction: f64,
    /// `ceil((Q_alpha(x⁰) - Σ f_i*) alpha⁻⁴ rho⁵)`.
    #[serde(serialize_with = "as_decimal")]
    pub k: BigUint,
    pub log10_k: f64,
    /// Localization radius `sqrt(alpha) / (40 L_H rho^{3/2})`.
    pub d: f64,
    /// `sqrt(alpha)`.
    pub eps_g: f64,
    /// `sqrt(eps_g L_H)`.
    pub eps_h: f64,
    /// Escape window `ceil(alpha^{-3/2} rho)`.
    pub r: u64,
    /// Inputs the schedule was derived from.
    pub l_g: f64,
    pub l_h: f64,
    pub disagreement: f64,
    pub spectral: Spectral,
    pub m: usize,
    pub n: usize,
}

fn as_decimal<S: Serializer>(k: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&k.to_string())
}

/// Early-stop thresholds `(eta, eps, gamma)` for consensual second-order
/// stationarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityThresholds {
    pub eta: f64,
    pub eps: f64,
    pub gamma: f64,
}

/// `zeta = (alpha D + alpha sigma (sqrt(2 rho) + sqrt(mn))) / (1 - lambda_2 - alpha L_g)`.
///
/// Fails with [`NdgdError::ScheduleInfeasible`] when the denominator is not
/// positive; the reported `required_rho` assumes the schedule step size.
#[allow(clippy::too_many_arguments)]
pub fn consensus_bound(
    alpha: f64,
    sigma: f64,
    rho: f64,
    disagreement: f64,
    l_g: f64,
    spectral: Spectral,
    m: usize,
    n: usize,
) -> Result<f64> {
    let contraction = spectral.lambda_2 + alpha * l_g;
    let denom = 1.0 - contraction;
    if !(denom > 0.0) {
        return Err(NdgdError::ScheduleInfeasible { rho, contraction, required_rho: required_rho(spectral) });
    }
    let mn = (m * n) as f64;
    Ok((alpha * disagreement + alpha * sigma * ((2.0 * rho).sqrt() + mn.sqrt())) / denom)
}

/// Smallest `rho` with `lambda_2 + lambda_min / sqrt(rho) < 1` (infinite if
/// `lambda_2 >= 1`).
pub fn required_rho(spectral: Spectral) -> f64 {
    let gap = 1.0 - spectral.lambda_2;
    if gap <= 0.0 {
        f64::INFINITY
    } else {
        (spectral.lambda_min / gap).powi(2).max(1.0)
    }
}

pub fn build_schedule(
    rho: f64,
    constants: &RegularityConstants,
    spectral: Spectral,
    m: usize,
    n: usize,
    q0: f64,
) -> Result<Schedule> {
    if !(rho >= 1.0) || !rho.is_finite() {
        return Err(NdgdError::Parameter(format!("rho must be finite and >= 1, got {rho}")));
    }
    if m == 0 || n == 0 {
        return Err(NdgdError::Parameter("m and n must be positive".into()));
    }
    let (l_g, l_h) = (constants.l_g, constants.l_h);
    if !(l_g > 0.0 && l_h > 0.0 && spectral.lambda_min > 0.0) {
        return Err(NdgdError::Parameter(format!(
            "need L_g, L_H, lambda_min(W) > 0; got {l_g}, {l_h}, {}",
            spectral.lambda_min
        )));
    }
    let mn = (m * n) as f64;
    let alpha = spectral.lambda_min / (l_g * rho.sqrt());
    let sigma = alpha / (40.0 * mn.sqrt() * l_h * rho.powi(3));
    let zeta = consensus_bound(alpha, sigma, rho, constants.d, l_g, spectral, m, n)?;
    let d = alpha.sqrt() / (40.0 * l_h * rho.powf(1.5));
    let eps_g = alpha.sqrt();
    let eps_h = (eps_g * l_h).sqrt();
    let r = (alpha.powf(-1.5) * rho).ceil() as u64;
    let (k, log10_k) = iteration_count(q0 - constants.f_star_sum, alpha, rho)?;
    Ok(Schedule {
        rho,
        alpha,
        sigma,
        zeta,
        contraction: spectral.lambda_2 + alpha * l_g,
        k,
        log10_k,
        d,
        eps_g,
        eps_h,
        r,
        l_g,
        l_h,
        disagreement: constants.d,
        spectral,
        m,
        n,
    })
}

fn iteration_count(gap: f64, alpha: f64, rho: f64) -> Result<(BigUint, f64)> {
    if gap.is_nan() || gap == f64::INFINITY {
        return Err(NdgdError::Parameter(format!("optimality gap Q(x0) - Σf* is {gap}; an infimum is unknown")));
    }
    if gap <= 0.0 {
        return Ok((BigUint::zero(), f64::NEG_INFINITY));
    }
    let log10_k = gap.log10() - 4.0 * alpha.log10() + 5.0 * rho.log10();
    let value = gap * alpha.powi(-4) * rho.powi(5);
    let k = if value.is_finite() {
        BigUint::from_f64(value.ceil()).expect("finite positive value")
    } else {
        // mantissa/exponent split keeps 53 significant bits
        let log2 = log10_k * std::f64::consts::LOG2_10;
        let shift = (log2.floor() - 52.0).max(0.0);
        let mantissa = (log2 - shift).exp2().ceil();
        BigUint::from_f64(mantissa).expect("finite mantissa") << (shift as usize)
    };
    Ok((k, log10_k))
}

impl Schedule {
    /// Same schedule with a different noise level; `zeta` is recomputed.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(NdgdError::Parameter(format!("sigma must be >= 0, got {sigma}")));
        }
        let zeta =
            consensus_bound(self.alpha, sigma, self.rho, self.disagreement, self.l_g, self.spectral, self.m, self.n)?;
        Ok(Self { sigma, zeta, ..self.clone() })
    }

    /// `(zeta, sqrt(m alpha), m sqrt(L_H sqrt(alpha)))`.
    pub fn stationarity_thresholds(&self) -> StationarityThresholds {
        let m = self.m as f64;
        StationarityThresholds {
            eta: self.zeta,
            eps: (m * self.alpha).sqrt(),
            gamma: m * (self.l_h * self.alpha.sqrt()).sqrt(),
        }
    }

    /// `L_g + (1 - lambda_min(W)) / alpha`, the gradient Lipschitz constant
    /// of `Q_alpha`.
    pub fn q_lipschitz(&self) -> f64 {
        self.l_g + (1.0 - self.spectral.lambda_min) / self.alpha
    }

    /// Iteration budget `min(max_iters, K)`.
    pub fn cap(&self, max_iters: usize) -> usize {
        match u64::try_from(&self.k) {
            Ok(k) if (k as u128) < max_iters as u128 => k as usize,
            _ => max_iters,
        }
    }
}
