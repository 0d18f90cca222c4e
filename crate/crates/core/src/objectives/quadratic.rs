//! Quadratic components `f_i(x) = xᵀA_i x / 2 + b_iᵀx`, whose Hessians are
//! constant. Useful as a reference instance where second-order expansions
//! are exact.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{Component, DomainBox, ObjectiveSet, DEFAULT_BOX_HALF_WIDTH};
use crate::error::{NdgdError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticComponent {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Component for QuadraticComponent {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.a * &x)) + self.b.dot(&x)
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(x) + &self.b
    }

    fn hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }

    fn infimum(&self) -> Option<f64> {
        let chol = self.a.clone().cholesky()?;
        Some(-0.5 * self.b.dot(&chol.solve(&self.b)))
    }
}

/// One `(A_i, b_i)` pair per agent; each `A_i` must be symmetric.
pub fn make_quadratic(terms: Vec<(DMatrix<f64>, DVector<f64>)>) -> Result<ObjectiveSet> {
    let n = terms.first().map(|t| t.1.len()).unwrap_or(0);
    if n == 0 {
        return Err(NdgdError::Parameter("quadratic needs at least one nonempty term".into()));
    }
    let mut components: Vec<Arc<dyn Component>> = Vec::with_capacity(terms.len());
    for (a, b) in terms {
        if a.nrows() != n || a.ncols() != n || b.len() != n {
            return Err(NdgdError::Parameter("quadratic term dimension mismatch".into()));
        }
        if (&a - a.transpose()).amax() > 0.0 {
            return Err(NdgdError::Parameter("quadratic term matrix must be symmetric".into()));
        }
        components.push(Arc::new(QuadraticComponent { a, b }));
    }
    ObjectiveSet::new("quadratic", components, DomainBox::cube(n, DEFAULT_BOX_HALF_WIDTH)?, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_hessian_and_infimum() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let c = QuadraticComponent { a: a.clone(), b: b.clone() };
        assert_eq!(c.hessian(&[3.0, -7.0]), a);
        let xstar = -a.clone().lu().solve(&b).unwrap();
        assert!((c.value(xstar.as_slice()) - c.infimum().unwrap()).abs() < 1e-14);
        let indefinite = QuadraticComponent { a: DMatrix::from_row_slice(1, 1, &[-1.0]), b: DVector::zeros(1) };
        assert!(indefinite.infimum().is_none());
    }

    #[test]
    fn rejects_asymmetric_terms() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(make_quadratic(vec![(a, DVector::zeros(2))]).is_err());
    }
}
