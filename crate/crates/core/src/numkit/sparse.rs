use crate::numkit::{DenseVector, NumError};
use crate::scalar::Scalar;

/// Sparse vector in coordinate form. Indices strictly increase, every index is
/// below `dim`, and explicit zeros are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector<S> {
    indices: Vec<usize>,
    values: Vec<S>,
    dim: usize,
}

impl<S: Scalar> SparseVector<S> {
    pub fn empty(dim: usize) -> Self {
        Self { indices: Vec::new(), values: Vec::new(), dim }
    }

    /// Builds a sparse vector, validating the ordering and bound invariants.
    /// Zero values are dropped.
    pub fn new(indices: Vec<usize>, values: Vec<S>, dim: usize) -> Result<Self, NumError> {
        if dim == 0 {
            return Err(NumError::EmptyVector);
        }
        if indices.len() != values.len() {
            return Err(NumError::LengthMismatch { indices: indices.len(), values: values.len() });
        }
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(NumError::UnsortedIndices { previous: w[0], next: w[1] });
            }
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(NumError::IndexOutOfRange { index: last, dim });
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(NumError::NonFinite { index: indices[pos] });
        }
        let (indices, values) = indices
            .into_iter()
            .zip(values)
            .filter(|(_, v)| !v.is_zero())
            .unzip();
        Ok(Self { indices, values, dim })
    }

    /// Sparse view of a dense vector.
    pub fn from_dense(x: &DenseVector<S>) -> Self {
        let (indices, values) = x
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, v)| (i, *v))
            .unzip();
        Self { indices, values, dim: x.dim() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, S)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Raises `dim` (never lowers it). Used when a dataset pads trailing features.
    pub fn with_dim(mut self, dim: usize) -> Result<Self, NumError> {
        if dim < self.dim {
            return Err(NumError::DimensionMismatch { left: dim, right: self.dim });
        }
        self.dim = dim;
        Ok(self)
    }

    pub fn densify(&self) -> DenseVector<S> {
        let mut out = DenseVector::zeros(self.dim);
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn norm_sq(&self) -> S {
        self.values.iter().map(|v| *v * *v).sum()
    }

    /// Σ values[k] · dense[indices[k]], accumulated left to right.
    pub fn dot(&self, dense: &DenseVector<S>) -> Result<S, NumError> {
        if self.dim != dense.dim() {
            return Err(NumError::DimensionMismatch { left: self.dim, right: dense.dim() });
        }
        Ok(self.dot_unchecked(dense.as_slice()))
    }

    #[inline]
    pub(crate) fn dot_unchecked(&self, dense: &[S]) -> S {
        let mut acc = S::zero();
        for (i, v) in self.iter() {
            acc += v * dense[i];
        }
        acc
    }

    /// `out += alpha * self` without densifying.
    #[inline]
    pub(crate) fn scatter_add(&self, alpha: S, out: &mut [S]) {
        for (i, v) in self.iter() {
            out[i] += alpha * v;
        }
    }
}

/// Free-function form of [`SparseVector::dot`].
pub fn dot<S: Scalar>(a: &SparseVector<S>, b: &DenseVector<S>) -> Result<S, NumError> {
    a.dot(b)
}
