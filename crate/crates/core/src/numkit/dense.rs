use std::ops::{Index, IndexMut};

use crate::numkit::NumError;
use crate::scalar::Scalar;

/// Owned dense vector. Carries iterates, gradients and the reference optimum.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector<S> {
    values: Vec<S>,
}

impl<S: Scalar> DenseVector<S> {
    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![S::zero(); dim] }
    }

    /// Wraps `values`, rejecting empty input and non-finite entries.
    pub fn from_vec(values: Vec<S>) -> Result<Self, NumError> {
        if values.is_empty() {
            return Err(NumError::EmptyVector);
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(NumError::NonFinite { index: pos });
        }
        Ok(Self { values })
    }

    /// Wraps `values` without the finiteness scan. Used on hot paths where the
    /// caller checks divergence separately.
    pub(crate) fn from_vec_unchecked(values: Vec<S>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<S> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, S> {
        self.values.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, other: &Self) -> Result<(), NumError> {
        if self.dim() != other.dim() {
            return Err(NumError::DimensionMismatch { left: self.dim(), right: other.dim() });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<S, NumError> {
        self.check_dim(other)?;
        let mut acc = S::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += *a * *b;
        }
        Ok(acc)
    }

    pub fn norm_sq(&self) -> S {
        let mut acc = S::zero();
        for v in &self.values {
            acc += *v * *v;
        }
        acc
    }

    pub fn norm(&self) -> S {
        self.norm_sq().sqrt()
    }

    /// ‖self − other‖².
    pub fn dist_sq(&self, other: &Self) -> Result<S, NumError> {
        self.check_dim(other)?;
        let mut acc = S::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            let d = *a - *b;
            acc += d * d;
        }
        Ok(acc)
    }

    /// In-place `self += alpha * x`.
    pub fn add_scaled(&mut self, alpha: S, x: &Self) -> Result<(), NumError> {
        self.check_dim(x)?;
        for (y, xv) in self.values.iter_mut().zip(&x.values) {
            *y += alpha * *xv;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: S) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    pub fn fill(&mut self, value: S) {
        for v in &mut self.values {
            *v = value;
        }
    }

    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }
}

/// Returns `y + alpha * x` as a new vector.
pub fn axpy<S: Scalar>(
    alpha: S,
    x: &DenseVector<S>,
    y: &DenseVector<S>,
) -> Result<DenseVector<S>, NumError> {
    let mut out = y.clone();
    out.add_scaled(alpha, x)?;
    Ok(out)
}

/// Mean of equal-length vectors, accumulated in slice order.
///
/// Computed as `v₀ + (1/M) Σ (vₘ − v₀)`, so a set of bitwise-equal vectors
/// averages to exactly that vector.
pub fn mean<S: Scalar>(vectors: &[DenseVector<S>]) -> Result<DenseVector<S>, NumError> {
    let first = vectors.first().ok_or(NumError::EmptyVector)?;
    let dim = first.dim();
    let mut acc = vec![S::zero(); dim];
    for v in &vectors[1..] {
        if v.dim() != dim {
            return Err(NumError::DimensionMismatch { left: dim, right: v.dim() });
        }
        for ((a, x), x0) in acc.iter_mut().zip(&v.values).zip(&first.values) {
            *a += *x - *x0;
        }
    }
    let inv = S::one() / S::of_usize(vectors.len());
    let values = first.values.iter().zip(acc).map(|(x0, a)| *x0 + a * inv).collect();
    Ok(DenseVector { values })
}

impl<S> Index<usize> for DenseVector<S> {
    type Output = S;

    fn index(&self, i: usize) -> &S {
        &self.values[i]
    }
}

impl<S> IndexMut<usize> for DenseVector<S> {
    fn index_mut(&mut self, i: usize) -> &mut S {
        &mut self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DenseVector<f64> {
        DenseVector::from_vec(xs.to_vec()).unwrap()
    }

    #[test]
    fn axpy_examples() {
        let y = v(&[1.0, 1.0]);
        assert_eq!(axpy(0.0, &v(&[5.0, 7.0]), &y).unwrap(), y);
        assert_eq!(axpy(1.0, &y, &y).unwrap(), v(&[2.0, 2.0]));
        assert_eq!(axpy(-0.5, &v(&[2.0, 4.0]), &y).unwrap(), v(&[0.0, -1.0]));
        // inputs untouched
        assert_eq!(y, v(&[1.0, 1.0]));
    }

    #[test]
    fn axpy_rejects_mismatch() {
        let err = axpy(1.0, &v(&[1.0]), &v(&[1.0, 2.0])).unwrap_err();
        assert_eq!(err, NumError::DimensionMismatch { left: 2, right: 1 });
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(
            DenseVector::from_vec(vec![1.0, f64::NAN]).unwrap_err(),
            NumError::NonFinite { index: 1 }
        );
        assert_eq!(DenseVector::<f64>::from_vec(vec![]).unwrap_err(), NumError::EmptyVector);
    }

    #[test]
    fn mean_of_equal_vectors_is_exact() {
        let x = v(&[0.1, 1.0 / 3.0, -7.25e-9]);
        let m = mean(&[x.clone(), x.clone(), x.clone()]).unwrap();
        assert_eq!(m, x);
    }

    #[test]
    fn mean_hand_case() {
        let m = mean(&[v(&[0.0, 2.0]), v(&[2.0, 4.0])]).unwrap();
        assert_eq!(m, v(&[1.0, 3.0]));
    }
}
