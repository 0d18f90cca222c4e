//! Finite-sum objectives `f = Σ f_i`, their lifted form
//! `F(x̂) = Σ f_i(x̂_i)` over stacked agent copies, and the penalized
//! auxiliary function `Q_alpha(x̂) = F(x̂) + ‖x̂‖²_{I - Ŵ} / (2 alpha)`.

mod logistic;
mod quadratic;
mod quartic;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{NdgdError, Result};
use crate::rng::stream_rng;
use crate::topology::{sorted_eigenvalues, MixingMatrix};

pub use logistic::{generate_logistic_data, make_logistic, LogisticComponent, LogisticSample};
pub use quadratic::{make_quadratic, QuadraticComponent};
pub use quartic::{make_quartic, random_quartic_coeffs, QuarticCoeffs, QuarticComponent};

/// Inflation applied to sampled regularity constants.
pub const SAFETY_FACTOR: f64 = 1.5;
/// Constants are reported no smaller than this so they stay strictly positive.
pub const CONSTANT_FLOOR: f64 = 1e-12;
/// Samples used for the constants attached to the built-in instances.
pub const DEFAULT_CONSTANT_SAMPLES: usize = 2000;
pub const DEFAULT_CONSTANT_SEED: u64 = 0;
pub const DEFAULT_BOX_HALF_WIDTH: f64 = 2.0;

/// One local objective `f_i: R^n -> R` with analytic derivatives.
pub trait Component: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> DVector<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
    /// Global infimum of this component, when known in closed form.
    fn infimum(&self) -> Option<f64> {
        None
    }
}

/// Axis-aligned box on which regularity constants are certified.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(NdgdError::Parameter("box bounds must be nonempty and of equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(NdgdError::Parameter(format!("empty or unbounded box {lo:?}..{hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    /// `[-half, half]^n`.
    pub fn cube(n: usize, half: f64) -> Result<Self> {
        Self::new(vec![-half; n], vec![half; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect()
    }

    fn corners(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        if n > 10 {
            return Vec::new();
        }
        (0..1usize << n)
            .map(|mask| (0..n).map(|k| if mask >> k & 1 == 1 { self.hi[k] } else { self.lo[k] }).collect())
            .collect()
    }
}

/// Lipschitz and disagreement constants certified on `domain_box`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityConstants {
    /// Gradient Lipschitz constant, max over components.
    pub l_g: f64,
    /// Hessian Lipschitz constant, max over components.
    pub l_h: f64,
    /// Bound on `‖∇f_i(x) - ∇f_j(x)‖`.
    pub d: f64,
    /// `Σ_i inf f_i`.
    pub f_star_sum: f64,
    pub domain_box: DomainBox,
}

/// Stacked decision vector; agent `i` owns entries `[i*n, (i+1)*n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPoint {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl LiftedPoint {
    pub fn new(m: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 || data.len() != m * n {
            return Err(NdgdError::Parameter(format!(
                "lifted point needs m*n = {} entries, got {}",
                m * n,
                data.len()
            )));
        }
        Ok(Self { m, n, data })
    }

    /// `1_m ⊗ v`.
    pub fn consensual(m: usize, v: &[f64]) -> Self {
        Self { m, n: v.len(), data: v.repeat(m) }
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self { m, n, data: vec![0.0; m * n] }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data)
    }

    pub fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self { m: self.m, n: self.n, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Mean of the agent blocks.
pub fn av(x: &LiftedPoint) -> DVector<f64> {
    let mut mean = DVector::zeros(x.n());
    for b in x.blocks() {
        for (acc, v) in mean.iter_mut().zip(b) {
            *acc += v;
        }
    }
    mean / x.m() as f64
}

/// `‖x̂ - 1_m ⊗ av(x̂)‖`.
pub fn consensus_error(x: &LiftedPoint) -> f64 {
    let mean = av(x);
    x.blocks().flat_map(|b| b.iter().zip(mean.iter()).map(|(v, a)| (v - a) * (v - a))).sum::<f64>().sqrt()
}

/// Per-agent distances `‖x̂_i - av(x̂)‖`.
pub fn agent_deviations(x: &LiftedPoint) -> Vec<f64> {
    let mean = av(x);
    x.blocks().map(|b| b.iter().zip(mean.iter()).map(|(v, a)| (v - a) * (v - a)).sum::<f64>().sqrt()).collect()
}

/// Value, gradient and block-diagonal Hessian of the lifted objective.
#[derive(Debug, Clone)]
pub struct FEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess_blocks: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct QEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub lambda_min_hess: f64,
}

/// The components `f_1..f_m`, their certified constants and, when known, the
/// local minimizers of `f = Σ f_i`.
#[derive(Debug, Clone)]
pub struct ObjectiveSet {
    kind: String,
    n: usize,
    components: Vec<Arc<dyn Component>>,
    constants: RegularityConstants,
    minimizers: Option<Vec<DVector<f64>>>,
}

impl ObjectiveSet {
    /// Builds a set and certifies its constants on `domain_box` with the
    /// default sampling budget.
    pub fn new(
        kind: impl Into<String>,
        components: Vec<Arc<dyn Component>>,
        domain_box: DomainBox,
        minimizers: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        let n = components
            .first()
            .map(|c| c.dim())
            .ok_or_else(|| NdgdError::Parameter("objective needs at least one component".into()))?;
        if components.iter().any(|c| c.dim() != n) {
            return Err(NdgdError::Parameter("components disagree on dimension".into()));
        }
        if domain_box.dim() != n {
            return Err(NdgdError::Parameter(format!("box dimension {} != n = {n}", domain_box.dim())));
        }
        if let Some(mins) = &minimizers {
            if mins.iter().any(|p| p.len() != n) {
                return Err(NdgdError::Parameter("minimizer dimension mismatch".into()));
            }
        }
        let mut set =
            Self { kind: kind.into(), n, components, constants: placeholder_constants(domain_box.clone()), minimizers };
        set.constants = estimate_constants(&set, &domain_box, DEFAULT_CONSTANT_SAMPLES, DEFAULT_CONSTANT_SEED)?;
        Ok(set)
    }

    /// Re-certifies the constants on a different box or budget.
    pub fn with_constants(mut self, domain_box: &DomainBox, samples: usize, seed: u64) -> Result<Self> {
        self.constants = estimate_constants(&self, domain_box, samples, seed)?;
        Ok(self)
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> &[Arc<dyn Component>] {
        &self.components
    }

    pub fn constants(&self) -> &RegularityConstants {
        &self.constants
    }

    pub fn minimizers(&self) -> Option<&[DVector<f64>]> {
        self.minimizers.as_deref()
    }

    /// `f(x) = Σ f_i(x)`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|c| c.value(x)).sum()
    }

    pub fn gradient_at(&self, x: &[f64]) -> DVector<f64> {
        self.components.iter().fold(DVector::zeros(self.n), |acc, c| acc + c.gradient(x))
    }

    pub fn hessian_at(&self, x: &[f64]) -> DMatrix<f64> {
        self.components.iter().fold(DMatrix::zeros(self.n, self.n), |acc, c| acc + c.hessian(x))
    }

    fn check_point(&self, x: &LiftedPoint) -> Result<()> {
        if x.m() != self.m() || x.n() != self.n {
            return Err(NdgdError::Parameter(format!(
                "point has shape ({}, {}) but objective is ({}, {})",
                x.m(),
                x.n(),
                self.m(),
                self.n
            )));
        }
        Ok(())
    }

    /// `F(x̂) = Σ f_i(x̂_i)`.
    pub fn f_value(&self, x: &LiftedPoint) -> f64 {
        self.components.iter().zip(x.blocks()).map(|(c, b)| c.value(b)).sum()
    }

    /// `∇F(x̂)`, block `i` being `∇f_i(x̂_i)`.
    pub fn f_grad(&self, x: &LiftedPoint) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.as_slice().len());
        for (c, b) in self.components.iter().zip(x.blocks()) {
            out.extend(c.gradient(b).iter());
        }
        out
    }

    pub fn f_eval(&self, x: &LiftedPoint) -> Result<FEval> {
        self.check_point(x)?;
        Ok(FEval {
            value: self.f_value(x),
            grad: DVector::from_vec(self.f_grad(x)),
            hess_blocks: self.components.iter().zip(x.blocks()).map(|(c, b)| c.hessian(b)).collect(),
        })
    }

    /// `Σ_i ∇f_i(x̂_i)`.
    pub fn gradient_sum(&self, x: &LiftedPoint) -> DVector<f64> {
        self.components.iter().zip(x.blocks()).fold(DVector::zeros(self.n), |acc, (c, b)| acc + c.gradient(b))
    }

    /// `Σ_i ∇²f_i(x̂_i)`.
    pub fn hessian_sum(&self, x: &LiftedPoint) -> DMatrix<f64> {
        self.components.iter().zip(x.blocks()).fold(DMatrix::zeros(self.n, self.n), |acc, (c, b)| acc + c.hessian(b))
    }

    pub fn lambda_min_hessian_sum(&self, x: &LiftedPoint) -> Result<f64> {
        Ok(sorted_eigenvalues(&self.hessian_sum(x))?[0])
    }

    /// Smallest eigenvalue of the block-diagonal `∇²F(x̂)`.
    pub fn lambda_min_f_hessian(&self, x: &LiftedPoint) -> Result<f64> {
        let mut lo = f64::INFINITY;
        for (c, b) in self.components.iter().zip(x.blocks()) {
            lo = lo.min(sorted_eigenvalues(&c.hessian(b))?[0]);
        }
        Ok(lo)
    }

    /// `Q_alpha(x̂)` and `∇Q_alpha(x̂)` without the eigenvalue solve.
    pub fn q_value_grad(&self, w: &MixingMatrix, alpha: f64, x: &LiftedPoint) -> Result<(f64, Vec<f64>)> {
        self.check_point(x)?;
        check_alpha(alpha)?;
        check_mixing(w, self.m())?;
        let lap = w.laplacian_apply(x.as_slice(), self.n);
        let penalty: f64 = x.as_slice().iter().zip(&lap).map(|(a, b)| a * b).sum();
        let value = self.f_value(x) + penalty / (2.0 * alpha);
        let grad = self.f_grad(x).into_iter().zip(&lap).map(|(g, l)| g + l / alpha).collect();
        Ok((value, grad))
    }

    /// Dense `∇²Q_alpha(x̂) = ∇²F(x̂) + ((I - W) ⊗ I_n) / alpha`.
    pub fn q_hessian(&self, w: &MixingMatrix, alpha: f64, x: &LiftedPoint) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        check_alpha(alpha)?;
        check_mixing(w, self.m())?;
        let (m, n) = (self.m(), self.n);
        let mut h = DMatrix::zeros(m * n, m * n);
        for (i, (c, b)) in self.components.iter().zip(x.blocks()).enumerate() {
            h.view_mut((i * n, i * n), (n, n)).copy_from(&c.hessian(b));
        }
        for i in 0..m {
            for j in 0..m {
                let lap = if i == j { 1.0 } else { 0.0 } - w.get(i, j);
                if lap != 0.0 {
                    for a in 0..n {
                        h[(i * n + a, j * n + a)] += lap / alpha;
                    }
                }
            }
        }
        Ok(h)
    }

    pub fn q_eval(&self, w: &MixingMatrix, alpha: f64, x: &LiftedPoint) -> Result<QEval> {
        let (value, grad) = self.q_value_grad(w, alpha, x)?;
        let lambda_min_hess = sorted_eigenvalues(&self.q_hessian(w, alpha, x)?)?[0];
        Ok(QEval { value, grad: DVector::from_vec(grad), lambda_min_hess })
    }

    /// Distance from each agent block to the known minimizer set.
    pub fn agent_distances(&self, x: &LiftedPoint) -> Option<Vec<f64>> {
        let mins = self.minimizers.as_ref()?;
        Some(x.blocks().map(|b| dist_to_points(b, mins)).collect())
    }
}

fn dist_to_points(x: &[f64], set: &[DVector<f64>]) -> f64 {
    set.iter()
        .map(|p| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(NdgdError::Parameter(format!("step size must be positive and finite, got {alpha}")));
    }
    Ok(())
}

fn check_mixing(w: &MixingMatrix, m: usize) -> Result<()> {
    if w.m() != m {
        return Err(NdgdError::Parameter(format!("mixing matrix is for {} agents, objective has {m}", w.m())));
    }
    Ok(())
}

fn placeholder_constants(domain_box: DomainBox) -> RegularityConstants {
    RegularityConstants { l_g: f64::NAN, l_h: f64::NAN, d: f64::NAN, f_star_sum: f64::NAN, domain_box }
}

fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    let eig = sorted_eigenvalues(a)?;
    Ok(eig[0].abs().max(eig[eig.len() - 1].abs()))
}

fn norm_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm()
}

/// Samples the box (plus its corners in low dimension) and takes the largest
/// observed gradient and Hessian Lipschitz ratios and gradient disagreement,
/// inflated by [`SAFETY_FACTOR`]. The gradient constant is also lower-bounded
/// by the largest sampled Hessian spectral norm.
///
/// `f_star_sum` adds the closed-form infima of the components; components
/// without one contribute their smallest sampled value.
pub fn estimate_constants(
    obj: &ObjectiveSet,
    domain_box: &DomainBox,
    samples: usize,
    seed: u64,
) -> Result<RegularityConstants> {
    if samples == 0 {
        return Err(NdgdError::Parameter("constant estimation needs at least one sample".into()));
    }
    if domain_box.dim() != obj.n() {
        return Err(NdgdError::Parameter(format!("box dimension {} != n = {}", domain_box.dim(), obj.n())));
    }
    let mut rng = stream_rng(seed, 0);
    let mut points = domain_box.corners();
    points.extend((0..samples).map(|_| domain_box.sample(&mut rng)));

    let comps = obj.components();
    let mut l_g = 0.0f64;
    let mut l_h = 0.0f64;
    let mut d = 0.0f64;
    let mut sampled_min = vec![f64::INFINITY; comps.len()];

    let mut prev: Option<(&Vec<f64>, Vec<DVector<f64>>, Vec<DMatrix<f64>>)> = None;
    for p in &points {
        let grads: Vec<DVector<f64>> = comps.iter().map(|c| c.gradient(p)).collect();
        let hessians: Vec<DMatrix<f64>> = comps.iter().map(|c| c.hessian(p)).collect();
        for (k, c) in comps.iter().enumerate() {
            sampled_min[k] = sampled_min[k].min(c.value(p));
            l_g = l_g.max(spectral_norm(&hessians[k])?);
        }
        for i in 0..grads.len() {
            for j in i + 1..grads.len() {
                d = d.max(norm_diff(&grads[i], &grads[j]));
            }
        }
        if let Some((q, qg, qh)) = &prev {
            let dist = p.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if dist > 0.0 {
                for k in 0..comps.len() {
                    l_g = l_g.max(norm_diff(&grads[k], &qg[k]) / dist);
                    l_h = l_h.max(spectral_norm(&(&hessians[k] - &qh[k]))? / dist);
                }
            }
        }
        prev = Some((p, grads, hessians));
    }

    let f_star_sum = comps.iter().zip(&sampled_min).map(|(c, s)| c.infimum().unwrap_or(*s)).sum();

    let inflate = |v: f64| (SAFETY_FACTOR * v).max(CONSTANT_FLOOR);
    Ok(RegularityConstants {
        l_g: inflate(l_g),
        l_h: inflate(l_h),
        d: inflate(d),
        f_star_sum,
        domain_box: domain_box.clone(),
    })
}

/// Central-difference checks of a component's derivatives at `x`, returning
/// the relative errors `(gradient, hessian)`. Norms below `1e-4` are treated
/// as `1e-4` so that near-stationary points are judged absolutely.
pub fn finite_difference_errors(c: &dyn Component, x: &[f64]) -> (f64, f64) {
    const STEP: f64 = 1e-5;
    const SCALE_FLOOR: f64 = 1e-4;
    let n = x.len();
    let g = c.gradient(x);
    let hess = c.hessian(x);
    let mut fd_g = DVector::zeros(n);
    let mut fd_h = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for k in 0..n {
        xp[k] = x[k] + STEP;
        let (fp, gp) = (c.value(&xp), c.gradient(&xp));
        xp[k] = x[k] - STEP;
        let (fm, gm) = (c.value(&xp), c.gradient(&xp));
        xp[k] = x[k];
        fd_g[k] = (fp - fm) / (2.0 * STEP);
        fd_h.set_column(k, &((gp - gm) / (2.0 * STEP)));
    }
    let rel = |err: f64, a: f64, b: f64| err / a.max(b).max(SCALE_FLOOR);
    (rel((&g - &fd_g).norm(), g.norm(), fd_g.norm()), rel((&hess - &fd_h).norm(), hess.norm(), fd_h.norm()))
}
