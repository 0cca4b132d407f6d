//! Dense/sparse vector arithmetic and the deterministic randomness used by the
//! rest of the crate.
//!
//! All reductions run left to right in index order so results are bit-stable
//! across runs and thread counts.

mod dense;
mod rng;
mod sparse;

pub use dense::{axpy, mean, DenseVector};
pub use rng::{draw_index, RngStream};
pub use sparse::{dot, SparseVector};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector must have at least one entry")]
    EmptyVector,
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("sparse indices not strictly increasing ({previous} then {next})")]
    UnsortedIndices { previous: usize, next: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("{indices} indices but {values} values")]
    LengthMismatch { indices: usize, values: usize },
    #[error("cannot draw from an empty range")]
    EmptyRange,
}
