use std::sync::Arc;

use crate::dataio::{partition, Dataset, Partition, Regime};
use crate::numkit::RngStream;
use crate::objective::smoothness::power_iteration_max_eig;
use crate::objective::{Batch, Objective, ObjectiveError};
use crate::scalar::Scalar;

/// `log(1 + exp(−t))` without overflow.
#[inline]
pub fn logistic_loss<S: Scalar>(t: S) -> S {
    if t >= S::zero() {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// `σ(−t) = 1 / (1 + exp(t))` without overflow.
#[inline]
fn sigmoid_neg<S: Scalar>(t: S) -> S {
    if t >= S::zero() {
        let e = (-t).exp();
        e / (S::one() + e)
    } else {
        S::one() / (S::one() + t.exp())
    }
}

/// ℓ2-regularized logistic regression over a partitioned dataset.
///
/// Each component is `log(1 + exp(−y aᵀx)) + (λ/2)‖x‖²`, so every `f_m` is
/// λ-strongly convex and `μ = λ`. No intercept feature is added.
#[derive(Clone, Debug)]
pub struct Problem<S> {
    dataset: Arc<Dataset<S>>,
    partition: Partition,
    lambda: S,
    smoothness: S,
    component_smoothness: S,
}

pub(crate) const POWER_TOL: f64 = 1e-9;
pub(crate) const POWER_MAX_ITER: usize = 10_000;

impl<S: Scalar> Problem<S> {
    /// Builds the problem and estimates `L` by power iteration.
    pub fn new(dataset: Arc<Dataset<S>>, partition: Partition, lambda: S) -> Result<Self, ObjectiveError> {
        let l = estimate_smoothness(&dataset, lambda)?;
        Self::with_smoothness(dataset, partition, lambda, l)
    }

    /// Builds the problem with a caller-supplied smoothness constant.
    pub fn with_smoothness(
        dataset: Arc<Dataset<S>>,
        partition: Partition,
        lambda: S,
        smoothness: S,
    ) -> Result<Self, ObjectiveError> {
        if !(lambda >= S::zero()) || !lambda.is_finite() {
            return Err(ObjectiveError::Invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if partition.total() != dataset.len() {
            return Err(ObjectiveError::Invalid(format!(
                "partition covers {} samples but the dataset has {}",
                partition.total(),
                dataset.len()
            )));
        }
        if let Some(node) = partition.node_ranges().iter().position(|r| r.is_empty()) {
            return Err(ObjectiveError::EmptyNode { node });
        }
        if !(smoothness > S::zero()) || smoothness < lambda {
            return Err(ObjectiveError::Invalid(format!(
                "smoothness {smoothness} must be positive and at least lambda {lambda}"
            )));
        }
        let quarter = S::of(0.25);
        let max_row = dataset
            .samples()
            .iter()
            .map(|s| s.features.norm_sq())
            .fold(S::zero(), |a, b| a.max(b));
        Ok(Self {
            dataset,
            partition,
            lambda,
            smoothness,
            component_smoothness: quarter * max_row + lambda,
        })
    }

    /// `λ = 1/n`.
    pub fn default_lambda(n: usize) -> S {
        S::one() / S::of_usize(n)
    }

    /// Same data and constants, different node assignment.
    pub fn repartition(&self, nodes: usize, regime: Regime) -> Result<Self, ObjectiveError> {
        let partition = partition(self.dataset.len(), nodes, regime)?;
        Ok(Self { partition, ..self.clone() })
    }

    pub fn dataset(&self) -> &Arc<Dataset<S>> {
        &self.dataset
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    pub fn mu(&self) -> S {
        self.lambda
    }

    /// `L/μ`, undefined when `μ = 0`.
    pub fn kappa(&self) -> Option<S> {
        (self.lambda > S::zero()).then(|| self.smoothness / self.lambda)
    }

    #[inline]
    fn sample_index(&self, node: usize, k: usize) -> usize {
        self.partition.range(node).start + k
    }

    #[inline]
    fn coef(&self, i: usize, x: &[S]) -> S {
        let s = &self.dataset.samples()[i];
        let t = s.label * s.features.dot_unchecked(x);
        -s.label * sigmoid_neg(t)
    }

    #[inline]
    fn add_regularizer(&self, x: &[S], scale: S, out: &mut [S]) {
        if self.lambda > S::zero() {
            let w = scale * self.lambda;
            for (o, xi) in out.iter_mut().zip(x) {
                *o += w * *xi;
            }
        }
    }
}

/// `λ_max((1/4n) AᵀA) + λ`, where `A` stacks every sample row.
pub(crate) fn estimate_smoothness<S: Scalar>(dataset: &Dataset<S>, lambda: S) -> Result<S, ObjectiveError> {
    if dataset.is_empty() {
        return Err(ObjectiveError::Invalid("dataset is empty".into()));
    }
    let inv = S::one() / (S::of(4.0) * S::of_usize(dataset.len()));
    let res = power_iteration_max_eig(
        dataset.dim(),
        |v, out| {
            out.iter_mut().for_each(|o| *o = S::zero());
            for s in dataset.samples() {
                let av = s.features.dot_unchecked(v);
                s.features.scatter_add(av * inv, out);
            }
        },
        POWER_TOL,
        POWER_MAX_ITER,
    )?;
    Ok(res.eigenvalue + lambda)
}

impl<S: Scalar> Objective<S> for Problem<S> {
    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn num_nodes(&self) -> usize {
        self.partition.num_nodes()
    }

    fn regime(&self) -> Regime {
        self.partition.regime()
    }

    fn smoothness(&self) -> S {
        self.smoothness
    }

    fn component_smoothness(&self) -> S {
        self.component_smoothness
    }

    fn strong_convexity(&self) -> S {
        self.lambda
    }

    fn num_components(&self, node: usize) -> usize {
        self.partition.range(node).len()
    }

    fn component_loss(&self, node: usize, k: usize, x: &[S]) -> S {
        let s = &self.dataset.samples()[self.sample_index(node, k)];
        let t = s.label * s.features.dot_unchecked(x);
        let reg = if self.lambda > S::zero() {
            let sq: S = x.iter().map(|v| *v * *v).sum();
            S::of(0.5) * self.lambda * sq
        } else {
            S::zero()
        };
        logistic_loss(t) + reg
    }

    fn add_component_grad(&self, node: usize, k: usize, x: &[S], scale: S, out: &mut [S]) {
        let i = self.sample_index(node, k);
        let c = self.coef(i, x);
        self.dataset.samples()[i].features.scatter_add(scale * c, out);
        self.add_regularizer(x, scale, out);
    }

    fn node_loss(&self, node: usize, x: &[S]) -> S {
        let range = self.partition.range(node).clone();
        let n = S::of_usize(range.len());
        let mut acc = S::zero();
        for s in &self.dataset.samples()[range] {
            acc += logistic_loss(s.label * s.features.dot_unchecked(x));
        }
        let sq: S = x.iter().map(|v| *v * *v).sum();
        acc / n + S::of(0.5) * self.lambda * sq
    }

    fn add_node_grad(&self, node: usize, x: &[S], scale: S, out: &mut [S]) {
        let range = self.partition.range(node).clone();
        let w = scale / S::of_usize(range.len());
        for i in range {
            let c = self.coef(i, x);
            self.dataset.samples()[i].features.scatter_add(w * c, out);
        }
        self.add_regularizer(x, scale, out);
    }

    fn sample_grad_into(&self, node: usize, x: &[S], rng: &mut RngStream, batch: Batch, out: &mut [S]) {
        out.iter_mut().for_each(|o| *o = S::zero());
        match batch {
            Batch::Full => self.add_node_grad(node, x, S::one(), out),
            Batch::Sampled(b) => {
                let range = self.partition.range(node);
                let w = S::one() / S::of_usize(b);
                for _ in 0..b {
                    let i = range.start + rng.draw_index(range.len()).expect("nodes are nonempty");
                    let c = self.coef(i, x);
                    self.dataset.samples()[i].features.scatter_add(w * c, out);
                }
                self.add_regularizer(x, S::one(), out);
            }
        }
    }
}
