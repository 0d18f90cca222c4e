//! Regularized logistic loss of a two-layer linear network,
//! `L_i(v₁, V₂) = [ln(1 + exp(-ỹ v₁ᵀV₂x)) + η (‖v₁‖² + ‖V₂‖²_F) / 2] / m`.
//!
//! The decision vector is `[v₁; vec(V₂)]` with `V₂` (`d × n`) flattened row by
//! row, so its length is `d + d n`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Component, DomainBox, ObjectiveSet, DEFAULT_BOX_HALF_WIDTH};
use crate::error::{NdgdError, Result};
use crate::rng::stream_rng;

/// One labelled example held by one agent; `label` is `-1` or `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticSample {
    pub x: Vec<f64>,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticComponent {
    pub sample: LogisticSample,
    pub eta: f64,
    /// Inner width `d`.
    pub inner: usize,
    /// The `1/m` factor.
    pub scale: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticComponent {
    fn features(&self) -> usize {
        self.sample.x.len()
    }

    /// `s = v₁ᵀV₂x` and its gradient `u = ∂s/∂θ`.
    fn score(&self, theta: &[f64]) -> (f64, DVector<f64>) {
        let (d, n) = (self.inner, self.features());
        let x = &self.sample.x;
        let (v1, v2) = theta.split_at(d);
        let mut u = DVector::zeros(d + d * n);
        let mut s = 0.0;
        for a in 0..d {
            let row = &v2[a * n..(a + 1) * n];
            let v2x: f64 = row.iter().zip(x).map(|(r, xi)| r * xi).sum();
            u[a] = v2x;
            s += v1[a] * v2x;
            for k in 0..n {
                u[d + a * n + k] = v1[a] * x[k];
            }
        }
        (s, u)
    }
}

impl Component for LogisticComponent {
    fn dim(&self) -> usize {
        self.inner + self.inner * self.features()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let (s, _) = self.score(theta);
        let ridge: f64 = theta.iter().map(|t| t * t).sum();
        self.scale * (softplus(-self.sample.label * s) + 0.5 * self.eta * ridge)
    }

    fn gradient(&self, theta: &[f64]) -> DVector<f64> {
        let (s, u) = self.score(theta);
        let y = self.sample.label;
        let phi = sigmoid(-y * s);
        (DVector::from_column_slice(theta) * self.eta - u * (y * phi)) * self.scale
    }

    fn hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let (d, n) = (self.inner, self.features());
        let dim = self.dim();
        let (s, u) = self.score(theta);
        let y = self.sample.label;
        let phi = sigmoid(-y * s);
        let mut h = DMatrix::identity(dim, dim) * self.eta + &u * u.transpose() * (phi * (1.0 - phi));
        // ∂²s/∂v₁[a]∂V₂[a,k] = x[k]
        for a in 0..d {
            for k in 0..n {
                let j = d + a * n + k;
                let v = -y * phi * self.sample.x[k];
                h[(a, j)] += v;
                h[(j, a)] += v;
            }
        }
        h * self.scale
    }

    fn infimum(&self) -> Option<f64> {
        // ‖θ‖²/2 >= |s| / ‖x‖, with equality for aligned factors, so the
        // problem reduces to min_{t>=0} ln(1 + e^{-t}) + η t / ‖x‖.
        let r = self.sample.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let inner = if r > 2.0 * self.eta {
            let t = (r / self.eta - 1.0).ln();
            softplus(-t) + self.eta * t / r
        } else {
            std::f64::consts::LN_2
        };
        Some(self.scale * inner)
    }
}

/// Labels uniform on `{-1, +1}`, features `x ~ N(label · 1, I_n)`.
pub fn generate_logistic_data(m: usize, n: usize, seed: u64) -> Vec<LogisticSample> {
    let mut rng = stream_rng(seed, 0);
    (0..m)
        .map(|_| {
            let label = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let x = (0..n).map(|_| label + rng.sample::<f64, _>(StandardNormal)).collect();
            LogisticSample { x, label }
        })
        .collect()
}

/// Builds the logistic instance, one sample per agent, with inner width `d`.
/// Constants are certified on `[-2, 2]^(d + d n)`. The minimizer set is
/// computed for `n = d = 1` only.
pub fn make_logistic(data: &[LogisticSample], eta: f64, d: usize) -> Result<ObjectiveSet> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(NdgdError::Parameter(format!("regularization eta must be positive, got {eta}")));
    }
    if d == 0 {
        return Err(NdgdError::Parameter("inner dimension must be at least 1".into()));
    }
    let Some(first) = data.first() else {
        return Err(NdgdError::Parameter("logistic instance needs at least one sample".into()));
    };
    let n = first.x.len();
    if n == 0 || data.iter().any(|s| s.x.len() != n) {
        return Err(NdgdError::Parameter("samples must share a nonzero feature dimension".into()));
    }
    if data.iter().any(|s| s.label != 1.0 && s.label != -1.0) {
        return Err(NdgdError::Parameter("labels must be -1 or +1".into()));
    }
    let scale = 1.0 / data.len() as f64;
    let components: Vec<Arc<dyn Component>> = data
        .iter()
        .map(|s| Arc::new(LogisticComponent { sample: s.clone(), eta, inner: d, scale }) as Arc<dyn Component>)
        .collect();
    let minimizers = (n == 1 && d == 1).then(|| scalar_minimizers(data, eta, &components)).transpose()?;
    ObjectiveSet::new("logistic", components, DomainBox::cube(d + d * n, DEFAULT_BOX_HALF_WIDTH)?, minimizers)
}

/// Local minimizers of `Σ L_i` for scalar `v₁, V₂`.
///
/// The sum is `h(p) + η (|v₁| - |V₂|)² / 2` with `p = v₁V₂`,
/// `h(p) = (1/m) Σ ln(1 + e^{-c_i p}) + η |p|` and `c_i = ỹ_i x_i`. `h` is
/// convex, so its unique minimizer `p*` fixes the minimizers at
/// `|v₁| = |V₂| = √|p*|` with `sign(v₁V₂) = sign(p*)`.
fn scalar_minimizers(
    data: &[LogisticSample],
    eta: f64,
    components: &[Arc<dyn Component>],
) -> Result<Vec<DVector<f64>>> {
    let m = data.len() as f64;
    let c: Vec<f64> = data.iter().map(|s| s.label * s.x[0]).collect();
    // derivative of h on p > 0 (dir = 1) or p < 0 (dir = -1), written in q = |p|
    let slope =
        |q: f64, dir: f64| -> f64 { -dir * c.iter().map(|ci| ci * sigmoid(-ci * dir * q)).sum::<f64>() / m + eta };
    let dir = if slope(0.0, 1.0) < 0.0 {
        1.0
    } else if slope(0.0, -1.0) < 0.0 {
        -1.0
    } else {
        return Ok(vec![DVector::zeros(2)]);
    };
    let mut hi = 1.0;
    while slope(hi, dir) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(NdgdError::Numeric("logistic minimizer search did not bracket".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid, dir) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = (0.5 * (lo + hi)).sqrt();
    let seeds = [[r, dir * r], [-r, -dir * r]];
    seeds.iter().map(|s| newton_polish(components, s)).collect()
}

fn newton_polish(components: &[Arc<dyn Component>], start: &[f64; 2]) -> Result<DVector<f64>> {
    let grad = |x: &DVector<f64>| components.iter().fold(DVector::zeros(2), |acc, c| acc + c.gradient(x.as_slice()));
    let hess = |x: &DVector<f64>| components.iter().fold(DMatrix::zeros(2, 2), |acc, c| acc + c.hessian(x.as_slice()));
    let mut x = DVector::from_column_slice(start);
    for _ in 0..20 {
        let g = grad(&x);
        if g.norm() < 1e-13 {
            break;
        }
        let step = hess(&x)
            .lu()
            .solve(&g)
            .ok_or_else(|| NdgdError::Numeric("singular Hessian while polishing minimizer".into()))?;
        x -= step;
    }
    if grad(&x).norm() >= 1e-9 {
        return Err(NdgdError::Numeric(format!("minimizer polish stalled at ‖∇f‖ = {:e}", grad(&x).norm())));
    }
    Ok(x)
}

impl ObjectiveSet {
    /// `true` when the Hessian of `Σ L_i` at the origin has a negative
    /// eigenvalue, i.e. `|Σ ỹ_i x_i| / (2m) > η` in the scalar case.
    pub fn origin_is_strict_saddle(&self) -> Result<bool> {
        let zero = vec![0.0; self.n()];
        let h = self.hessian_at(&zero);
        Ok(crate::topology::sorted_eigenvalues(&h)?[0] < 0.0 && self.gradient_at(&zero).norm() < 1e-14)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{finite_difference_errors, LiftedPoint};

    fn sample(x: f64, label: f64) -> LogisticSample {
        LogisticSample { x: vec![x], label }
    }

    #[test]
    fn origin_is_stationary() {
        let data = generate_logistic_data(5, 1, 3);
        let obj = make_logistic(&data, 0.1, 1).unwrap();
        for c in obj.components() {
            assert_eq!(c.gradient(&[0.0, 0.0]).norm(), 0.0);
        }
    }

    #[test]
    fn hessian_sum_at_origin_eigenvalues() {
        let data = generate_logistic_data(5, 1, 3);
        let eta = 0.1;
        let obj = make_logistic(&data, eta, 1).unwrap();
        let coupling: f64 = data.iter().map(|s| s.label * s.x[0]).sum::<f64>() / (2.0 * 5.0);
        let x = LiftedPoint::consensual(5, &[0.0, 0.0]);
        let eig = crate::topology::sorted_eigenvalues(&obj.hessian_sum(&x)).unwrap();
        assert!((eig[0] - (eta - coupling.abs())).abs() < 1e-14);
        assert!((eig[1] - (eta + coupling.abs())).abs() < 1e-14);
    }

    #[test]
    fn three_critical_points_when_coupling_dominates() {
        let data = vec![sample(1.2, 1.0), sample(-0.8, -1.0), sample(0.9, 1.0)];
        let obj = make_logistic(&data, 0.1, 1).unwrap();
        assert!(obj.origin_is_strict_saddle().unwrap());
        let mins = obj.minimizers().unwrap();
        assert_eq!(mins.len(), 2);
        for p in mins {
            assert!(obj.gradient_at(p.as_slice()).norm() < 1e-9);
            let eig = crate::topology::sorted_eigenvalues(&obj.hessian_at(p.as_slice())).unwrap();
            assert!(eig[0] > 0.0);
            // positive coupling puts minimizers in the first and third quadrants
            assert!(p[0] * p[1] > 0.0);
            assert!((p[0].abs() - p[1].abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn weak_coupling_has_single_minimizer_at_origin() {
        let data = vec![sample(0.05, 1.0), sample(0.02, -1.0)];
        let obj = make_logistic(&data, 0.1, 1).unwrap();
        assert!(!obj.origin_is_strict_saddle().unwrap());
        assert_eq!(obj.minimizers().unwrap(), &[DVector::zeros(2)]);
    }

    #[test]
    fn parameter_errors() {
        let data = vec![sample(1.0, 1.0)];
        assert!(make_logistic(&data, 0.0, 1).is_err());
        assert!(make_logistic(&data, 0.1, 0).is_err());
        assert!(make_logistic(&[sample(1.0, 0.5)], 0.1, 1).is_err());
    }

    #[test]
    fn infimum_matches_dense_scan() {
        for (x, label, eta) in [(1.7, 1.0, 0.1), (-0.3, 1.0, 0.4), (2.5, -1.0, 0.05)] {
            let comp = LogisticComponent { sample: sample(x, label), eta, inner: 1, scale: 0.5 };
            let mut best = f64::INFINITY;
            let steps = 1200;
            for i in 0..=steps {
                for j in 0..=steps {
                    let v1 = -6.0 + 12.0 * i as f64 / steps as f64;
                    let v2 = -6.0 + 12.0 * j as f64 / steps as f64;
                    best = best.min(comp.value(&[v1, v2]));
                }
            }
            let inf = comp.infimum().unwrap();
            assert!(inf <= best + 1e-12 && best - inf < 1e-4, "{inf} vs {best}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences_general_shape() {
        let data = generate_logistic_data(4, 3, 9);
        let obj = make_logistic(&data, 0.2, 2).unwrap();
        assert_eq!(obj.n(), 2 + 6);
        assert!(obj.minimizers().is_none());
        let mut rng = stream_rng(1, 0);
        let bx = DomainBox::cube(8, 1.5).unwrap();
        for _ in 0..30 {
            let x = bx.sample(&mut rng);
            for c in obj.components() {
                let (eg, eh) = finite_difference_errors(c.as_ref(), &x);
                assert!(eg < 1e-5 && eh < 1e-4, "{eg} {eh}");
            }
        }
    }
}
