//! Separable quartic `J_i(θ) = (a θ₁⁴ + b θ₁² + c θ₂⁴ + d θ₂²) / m`.
//!
//! With `Σa, Σb, Σc > 0` and `Σd < 0` the sum has a strict saddle at the
//! origin and two minimizers at `(0, ±√(-Σd / (2Σc)))`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{Component, DomainBox, ObjectiveSet, DEFAULT_BOX_HALF_WIDTH};
use crate::error::{NdgdError, Result};
use crate::rng::stream_rng;

/// `(a, b, c, d)` for one agent.
pub type QuarticCoeffs = (f64, f64, f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct QuarticComponent {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// The `1/m` factor.
    pub scale: f64,
}

impl Component for QuarticComponent {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (t1, t2) = (x[0] * x[0], x[1] * x[1]);
        self.scale * (self.a * t1 * t1 + self.b * t1 + self.c * t2 * t2 + self.d * t2)
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let (p, q) = (x[0], x[1]);
        DVector::from_vec(vec![
            self.scale * (4.0 * self.a * p * p * p + 2.0 * self.b * p),
            self.scale * (4.0 * self.c * q * q * q + 2.0 * self.d * q),
        ])
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let (p, q) = (x[0], x[1]);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                self.scale * (12.0 * self.a * p * p + 2.0 * self.b),
                0.0,
                0.0,
                self.scale * (12.0 * self.c * q * q + 2.0 * self.d),
            ],
        )
    }

    fn infimum(&self) -> Option<f64> {
        Some(self.scale * (quartic_min(self.a, self.b)? + quartic_min(self.c, self.d)?))
    }
}

/// `inf_t p t⁴ + q t²`, or `None` when unbounded below.
fn quartic_min(p: f64, q: f64) -> Option<f64> {
    if p > 0.0 {
        Some(if q < 0.0 { -q * q / (4.0 * p) } else { 0.0 })
    } else if p == 0.0 && q >= 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Builds the quartic instance with one coefficient tuple per agent.
/// Constants are certified on `[-2, 2]²`.
pub fn make_quartic(coeffs: &[QuarticCoeffs]) -> Result<ObjectiveSet> {
    if coeffs.is_empty() {
        return Err(NdgdError::Parameter("quartic needs at least one agent".into()));
    }
    let sum = coeffs.iter().fold((0.0, 0.0, 0.0, 0.0), |s, c| (s.0 + c.0, s.1 + c.1, s.2 + c.2, s.3 + c.3));
    if !(sum.0 > 0.0 && sum.1 > 0.0 && sum.2 > 0.0 && sum.3 < 0.0) {
        return Err(NdgdError::Parameter(format!(
            "quartic needs Σa > 0, Σb > 0, Σc > 0, Σd < 0; got ({}, {}, {}, {})",
            sum.0, sum.1, sum.2, sum.3
        )));
    }
    let scale = 1.0 / coeffs.len() as f64;
    let components = coeffs
        .iter()
        .map(|&(a, b, c, d)| Arc::new(QuarticComponent { a, b, c, d, scale }) as Arc<dyn Component>)
        .collect();
    let t2 = (-sum.3 / (2.0 * sum.2)).sqrt();
    let minimizers = vec![DVector::from_vec(vec![0.0, t2]), DVector::from_vec(vec![0.0, -t2])];
    ObjectiveSet::new("quartic", components, DomainBox::cube(2, DEFAULT_BOX_HALF_WIDTH)?, Some(minimizers))
}

/// `a, b, c ~ U(0.5, 1.5)`, `d ~ U(-1.5, -0.5)` per agent, redrawn until the
/// sign conditions on the sums hold.
pub fn random_quartic_coeffs(m: usize, seed: u64) -> Vec<QuarticCoeffs> {
    let mut rng = stream_rng(seed, 0);
    loop {
        let coeffs: Vec<QuarticCoeffs> = (0..m)
            .map(|_| {
                (
                    rng.random_range(0.5..1.5),
                    rng.random_range(0.5..1.5),
                    rng.random_range(0.5..1.5),
                    rng.random_range(-1.5..-0.5),
                )
            })
            .collect();
        let (sa, sb, sc, sd) =
            coeffs.iter().fold((0.0, 0.0, 0.0, 0.0), |s, c| (s.0 + c.0, s.1 + c.1, s.2 + c.2, s.3 + c.3));
        if sa > 0.0 && sb > 0.0 && sc > 0.0 && sd < 0.0 {
            return coeffs;
        }
    }
}
