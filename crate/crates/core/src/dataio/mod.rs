//! Dataset ingestion and assignment of samples to nodes.
//!
//! Nothing here shuffles: sample order is file order, and heterogeneous
//! partitions are contiguous index blocks.

mod libsvm;
mod manifest;
mod synthetic;

pub use libsvm::{parse_libsvm, read_libsvm_file, write_libsvm};
pub use manifest::{Manifest, ManifestEntry};
pub use synthetic::{SyntheticSpec, generate_synthetic};

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use thiserror::Error;

use crate::numkit::{NumError, SparseVector};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: feature indices must increase ({previous} then {next})")]
    NonIncreasingIndex { line: usize, previous: usize, next: usize },
    #[error("line {line}: non-numeric value {token:?}")]
    NonNumeric { line: usize, token: String },
    #[error("dataset is empty")]
    Empty,
    #[error("labels {found:?} cannot be mapped to a binary {{-1, +1}} problem")]
    Labels { found: Vec<f64> },
    #[error("io: {0}")]
    Io(String),
    #[error("partition: {0}")]
    Partition(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("checksum mismatch for {name}: expected {expected}, got {actual}")]
    Checksum { name: String, expected: String, actual: String },
    #[error("{name}: expected {expected_n} samples x {expected_dim} features, found {n} x {dim}")]
    Shape { name: String, expected_n: usize, expected_dim: usize, n: usize, dim: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

/// One labelled row; `label` is exactly −1 or +1.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<S> {
    pub features: SparseVector<S>,
    pub label: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<S> {
    samples: Vec<Sample<S>>,
    dim: usize,
    name: String,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(samples: Vec<Sample<S>>, dim: usize, name: &str) -> Result<Self, DataError> {
        if samples.is_empty() {
            return Err(DataError::Empty);
        }
        if dim == 0 {
            return Err(NumError::EmptyVector.into());
        }
        let mut samples = samples;
        for (i, s) in samples.iter_mut().enumerate() {
            if s.label != S::one() && s.label != -S::one() {
                return Err(DataError::Malformed {
                    line: i + 1,
                    reason: format!("label {} is not ±1", s.label),
                });
            }
            if s.features.dim() != dim {
                let f = std::mem::replace(&mut s.features, SparseVector::empty(1));
                s.features = f.with_dim(dim)?;
            }
        }
        Ok(Self { samples, dim, name: name.to_string() })
    }

    /// Raises the feature dimension; LIBSVM files omit trailing zero features.
    pub fn with_dim(self, dim: usize) -> Result<Self, DataError> {
        if dim < self.dim {
            return Err(NumError::DimensionMismatch { left: dim, right: self.dim }.into());
        }
        let name = self.name.clone();
        Dataset::new(self.samples, dim, &name)
    }

    pub fn samples(&self) -> &[Sample<S>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Every sample repeated `times` times in place (`aabbcc` order).
    pub fn repeat_each(&self, times: usize) -> Self {
        let samples = self
            .samples
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.clone(), times))
            .collect();
        Self { samples, dim: self.dim, name: self.name.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Every node samples from the whole dataset.
    Identical,
    /// Node `m` owns the `m`-th contiguous block.
    Heterogeneous,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Identical => "identical",
            Regime::Heterogeneous => "heterogeneous",
        })
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identical" | "iid" => Ok(Regime::Identical),
            "heterogeneous" | "het" | "non-iid" => Ok(Regime::Heterogeneous),
            other => Err(format!("unknown regime {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    node_ranges: Vec<Range<usize>>,
    regime: Regime,
}

impl Partition {
    pub fn node_ranges(&self) -> &[Range<usize>] {
        &self.node_ranges
    }

    pub fn range(&self, node: usize) -> &Range<usize> {
        &self.node_ranges[node]
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ranges.len()
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Size of the dataset the partition was built for.
    pub fn total(&self) -> usize {
        self.node_ranges.last().map_or(0, |r| r.end)
    }
}

/// Assigns `n` samples to `nodes` nodes.
///
/// Heterogeneous blocks have size ⌈n/M⌉ or ⌊n/M⌋, larger blocks first.
pub fn partition(n: usize, nodes: usize, regime: Regime) -> Result<Partition, DataError> {
    if nodes == 0 {
        return Err(DataError::Partition("number of nodes must be positive".into()));
    }
    if n == 0 {
        return Err(DataError::Empty);
    }
    let node_ranges = match regime {
        Regime::Identical => vec![0..n; nodes],
        Regime::Heterogeneous => {
            if nodes > n {
                return Err(DataError::Partition(format!(
                    "{nodes} nodes exceed {n} samples in the heterogeneous regime"
                )));
            }
            let base = n / nodes;
            let extra = n % nodes;
            let mut start = 0;
            (0..nodes)
                .map(|m| {
                    let len = base + usize::from(m < extra);
                    let r = start..start + len;
                    start += len;
                    r
                })
                .collect()
        }
    };
    Ok(Partition { node_ranges, regime })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn even_split() {
        let p = partition(10, 2, Regime::Heterogeneous).unwrap();
        assert_eq!(p.node_ranges(), &[0..5, 5..10]);
    }

    #[test]
    fn remainder_goes_to_front() {
        let p = partition(10, 3, Regime::Heterogeneous).unwrap();
        assert_eq!(p.node_ranges(), &[0..4, 4..7, 7..10]);
    }

    #[test]
    fn identical_copies() {
        let p = partition(10, 4, Regime::Identical).unwrap();
        assert_eq!(p.node_ranges(), &[0..10, 0..10, 0..10, 0..10]);
    }

    #[test]
    fn partition_errors() {
        assert!(partition(10, 0, Regime::Identical).is_err());
        assert!(partition(3, 4, Regime::Heterogeneous).is_err());
        assert!(partition(3, 4, Regime::Identical).is_ok());
    }

    #[test]
    fn dim_override_only_upward() {
        let ds: Dataset<f64> = parse_libsvm("+1 1:1 2:1\n-1 1:1".as_bytes(), "x").unwrap();
        let padded = ds.clone().with_dim(5).unwrap();
        assert_eq!(padded.dim(), 5);
        assert!(padded.samples().iter().all(|s| s.features.dim() == 5));
        assert!(ds.with_dim(1).is_err());
    }

    proptest! {
        #[test]
        fn heterogeneous_blocks_cover_exactly_once(n in 1usize..500, m in 1usize..50) {
            prop_assume!(m <= n);
            let p = partition(n, m, Regime::Heterogeneous).unwrap();
            let sizes: Vec<usize> = p.node_ranges().iter().map(|r| r.len()).collect();
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            prop_assert!(max - min <= 1);
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
            let mut next = 0;
            for r in p.node_ranges() {
                prop_assert_eq!(r.start, next);
                next = r.end;
            }
            prop_assert_eq!(next, n);
        }
    }
}
