//! Coupled NDGD runs with mirrored noise and the exact decomposition of
//! their difference.

use nalgebra::{DMatrix, DVector};

use crate::engine::{ndgd_step, sample_perturbation};
use crate::error::{NdgdError, Result};
use crate::objectives::{LiftedPoint, ObjectiveSet};
use crate::rng::stream_rng;
use crate::topology::MixingMatrix;

/// Two NDGD runs from the same point whose noises agree off `e_alpha` and
/// are opposite along it.
#[derive(Debug, Clone)]
pub struct CouplingPair {
    pub alpha: f64,
    pub sigma: f64,
    /// Unit bottom eigenvector of `∇²Q_alpha(x̂⁰)`.
    pub e_alpha: DVector<f64>,
    pub lambda_min: f64,
    pub y: Vec<LiftedPoint>,
    pub z: Vec<LiftedPoint>,
    pub noise_y: Vec<DVector<f64>>,
    pub noise_z: Vec<DVector<f64>>,
}

impl CouplingPair {
    pub fn steps(&self) -> usize {
        self.noise_y.len()
    }

    /// `Δ^k = y^k - z^k` for `k = 0..=steps`.
    pub fn deltas(&self) -> Vec<DVector<f64>> {
        self.y.iter().zip(&self.z).map(|(a, b)| a.to_dvector() - b.to_dvector()).collect()
    }

    /// `δ_n^k = n_y^k - n_z^k`.
    pub fn noise_diffs(&self) -> Vec<DVector<f64>> {
        self.noise_y.iter().zip(&self.noise_z).map(|(a, b)| a - b).collect()
    }

    /// Largest violation of the mirror conditions: the noise difference
    /// lies in `span(e_alpha)` and the projections onto `e_alpha` cancel.
    pub fn mirror_violation(&self) -> f64 {
        let e = &self.e_alpha;
        self.noise_y
            .iter()
            .zip(&self.noise_z)
            .map(|(ny, nz)| {
                let d = ny - nz;
                let off = (&d - e * e.dot(&d)).norm();
                off.max((e.dot(ny) + e.dot(nz)).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Evolves the pair for `steps` iterations. The shared noise `ξ` is drawn
/// from stream `(seed, 0)`; `n_y = ξ` and `n_z = ξ - 2 (e·ξ) e`.
///
/// At non-saddle starts `e_alpha` is still the bottom eigenvector.
pub fn evolve_coupling(
    obj: &ObjectiveSet,
    w: &MixingMatrix,
    alpha: f64,
    sigma: f64,
    x0: &LiftedPoint,
    steps: usize,
    seed: u64,
) -> Result<CouplingPair> {
    if !(sigma >= 0.0) {
        return Err(NdgdError::Parameter(format!("sigma must be >= 0, got {sigma}")));
    }
    let h0 = obj.q_hessian(w, alpha, x0)?;
    let eig = h0
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| NdgdError::Numeric("eigensolver did not converge".into()))?;
    let imin = eig.eigenvalues.imin();
    let e = eig.eigenvectors.column(imin).normalize();
    let lambda_min = eig.eigenvalues[imin];

    let (m, n) = (obj.m(), obj.n());
    let mut rng = stream_rng(seed, 0);
    let mut y = vec![x0.clone()];
    let mut z = vec![x0.clone()];
    let (mut noise_y, mut noise_z) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    for _ in 0..steps {
        let xi = DVector::from_vec(sample_perturbation(m, n, sigma, &mut rng));
        let nz = &xi - &e * (2.0 * e.dot(&xi));
        let yk = ndgd_step(obj, w, alpha, y.last().expect("nonempty"), xi.as_slice())?;
        let zk = ndgd_step(obj, w, alpha, z.last().expect("nonempty"), nz.as_slice())?;
        y.push(yk);
        z.push(zk);
        noise_y.push(xi);
        noise_z.push(nz);
    }
    Ok(CouplingPair { alpha, sigma, e_alpha: e, lambda_min, y, z, noise_y, noise_z })
}

/// Gauss–Legendre nodes and weights on `[0, 1]`; exact for polynomials of
/// degree `2 * count - 1`.
pub fn gauss_legendre(count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if count == 0 {
        return Err(NdgdError::Parameter("quadrature needs at least one node".into()));
    }
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let nf = count as f64;
    for i in 0..count.div_ceil(2) {
        // Newton on P_n from the Chebyshev-like initial guess
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=count {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (t * p1 - p0) / (t * t - 1.0);
            let step = p1 / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        nodes[i] = 0.5 * (1.0 - t);
        nodes[count - 1 - i] = 0.5 * (1.0 + t);
        weights[i] = 0.5 * w;
        weights[count - 1 - i] = 0.5 * w;
    }
    Ok((nodes, weights))
}

/// `Δ₁^k`, `Δ₂^k` and the residual `||Δ^k - Δ₁^k - Δ₂^k||` per step.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub hessian_term: Vec<DVector<f64>>,
    pub noise_term: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
}

impl Decomposition {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_hessian_term(&self) -> f64 {
        self.hessian_term.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// With `A = I - alpha H⁰` and `H⁰ = ∇²Q_alpha(x̂⁰)`:
///
/// `Δ₁^k = -alpha Σ_{τ<k} A^{k-1-τ} (I^τ - H⁰) Δ^τ`,
/// `Δ₂^k = -alpha Σ_{τ<k} A^{k-1-τ} δ_n^τ`,
///
/// where `I^τ` averages `∇²Q_alpha` over the segment from `z^τ` to `y^τ`.
/// The penalty part of `I^τ - H⁰` cancels, so only the block-diagonal
/// Hessians of `F` are integrated.
pub fn decompose(
    pair: &CouplingPair,
    obj: &ObjectiveSet,
    w: &MixingMatrix,
    quad_nodes: usize,
) -> Result<Decomposition> {
    let (nodes, weights) = gauss_legendre(quad_nodes)?;
    let (m, n) = (obj.m(), obj.n());
    let mn = m * n;
    let alpha = pair.alpha;
    let x0 = &pair.y[0];
    let a = DMatrix::identity(mn, mn) - obj.q_hessian(w, alpha, x0)? * alpha;
    let h0_blocks: Vec<DMatrix<f64>> = obj.components().iter().zip(x0.blocks()).map(|(c, b)| c.hessian(b)).collect();
    let deltas = pair.deltas();

    let mut d1 = DVector::zeros(mn);
    let mut d2 = DVector::zeros(mn);
    let mut out = Decomposition {
        hessian_term: vec![d1.clone()],
        noise_term: vec![d2.clone()],
        residuals: vec![deltas[0].norm()],
    };
    for (tau, dn) in pair.noise_diffs().iter().enumerate() {
        // (I^τ - H⁰) Δ^τ, block by block
        let delta = &deltas[tau];
        let mut v = DVector::zeros(mn);
        for (i, comp) in obj.components().iter().enumerate() {
            let (yb, zb) = (pair.y[tau].block(i), pair.z[tau].block(i));
            let mut avg = -h0_blocks[i].clone();
            for (s, wq) in nodes.iter().zip(&weights) {
                let p: Vec<f64> = yb.iter().zip(zb).map(|(yv, zv)| s * yv + (1.0 - s) * zv).collect();
                avg += comp.hessian(&p) * *wq;
            }
            let seg = delta.rows(i * n, n);
            v.rows_mut(i * n, n).copy_from(&(avg * seg));
        }
        d1 = &a * &d1 - v * alpha;
        d2 = &a * &d2 - dn * alpha;
        out.residuals.push((&deltas[tau + 1] - &d1 - &d2).norm());
        out.hessian_term.push(d1.clone());
        out.noise_term.push(d2.clone());
    }
    Ok(out)
}

/// `max_k ||Δ^k - Δ₁^k - Δ₂^k||`.
pub fn decomposition_check(
    pair: &CouplingPair,
    obj: &ObjectiveSet,
    w: &MixingMatrix,
    quad_nodes: usize,
) -> Result<f64> {
    Ok(decompose(pair, obj, w, quad_nodes)?.max_residual())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_quartic, random_quartic_coeffs};
    use crate::topology::{build_regular_graph, lazy_metropolis_mixing};

    fn setup() -> (ObjectiveSet, MixingMatrix) {
        let g = build_regular_graph(6, 2, 0).unwrap();
        (make_quartic(&random_quartic_coeffs(6, 3)).unwrap(), lazy_metropolis_mixing(&g).unwrap())
    }

    #[test]
    fn legendre_known_rules() {
        let (x, w) = gauss_legendre(1).unwrap();
        assert_eq!((x[0], w[0]), (0.5, 1.0));
        let (x, w) = gauss_legendre(2).unwrap();
        let r = 0.5 / 3f64.sqrt();
        assert!((x[0] - (0.5 - r)).abs() < 1e-15 && (x[1] - (0.5 + r)).abs() < 1e-15);
        assert!((w[0] - 0.5).abs() < 1e-15);
        let (x, w) = gauss_legendre(3).unwrap();
        assert!((x[1] - 0.5).abs() < 1e-15 && (w[1] - 4.0 / 9.0).abs() < 1e-15);
        assert!(gauss_legendre(0).is_err());
    }

    #[test]
    fn legendre_polynomial_exactness() {
        for count in [1, 2, 3, 5, 8, 16, 32] {
            let (x, w) = gauss_legendre(count).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for deg in 0..2 * count {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "count {count} deg {deg}");
            }
        }
    }

    #[test]
    fn zero_noise_keeps_pair_together() {
        let (obj, w) = setup();
        let x0 = LiftedPoint::consensual(6, &[0.01, 0.0]);
        let pair = evolve_coupling(&obj, &w, 0.05, 0.0, &x0, 20, 1).unwrap();
        assert!(pair.deltas().iter().all(|d| d.norm() == 0.0));
    }

    #[test]
    fn first_difference_lies_along_e() {
        let (obj, w) = setup();
        let x0 = LiftedPoint::consensual(6, &[0.01, 0.0]);
        let pair = evolve_coupling(&obj, &w, 0.05, 0.1, &x0, 1, 2).unwrap();
        assert!(pair.lambda_min < 0.0);
        let d1 = &pair.deltas()[1];
        let expect = -&pair.noise_diffs()[0] * 0.05;
        assert!((d1 - &expect).norm() < 1e-15);
        let e = &pair.e_alpha;
        assert!((d1 - e * e.dot(d1)).norm() < 1e-15);
    }

    #[test]
    fn mirror_and_decomposition_on_quartic() {
        let (obj, w) = setup();
        let x0 = LiftedPoint::consensual(6, &[0.01, 0.0]);
        let pair = evolve_coupling(&obj, &w, 0.05, 0.05, &x0, 50, 4).unwrap();
        assert!(pair.mirror_violation() < 1e-12);
        let r = decomposition_check(&pair, &obj, &w, 3).unwrap();
        assert!(r < 1e-9, "{r}");
    }
}
