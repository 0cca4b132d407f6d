//! Objectives as finite sums split across nodes.
//!
//! Node `m` owns `f_m(x) = (1/n_m) Σ_k f_{m,k}(x)` and the global objective is
//! `f = (1/M) Σ_m f_m`. Stochastic gradients draw components uniformly with
//! replacement from the node's own sum.

mod logistic;
mod quadratic;
mod reference;
mod smoothness;
mod variance;

pub use logistic::{logistic_loss, Problem};
pub use quadratic::{QuadraticComponent, QuadraticProblem};
pub use reference::{solve_reference, ReferenceSolution, SolverOptions};
pub use smoothness::{power_iteration_max_eig, PowerIterationResult};
pub use variance::{
    measure_variances, node_optimum_noise, variance_report_from_views, VarianceReport,
};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dataio::{DataError, Regime};
use crate::numkit::{DenseVector, NumError, RngStream};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("node {node} out of range for {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("node {node} holds no samples")]
    EmptyNode { node: usize },
    #[error("power iteration did not converge in {iterations} iterations (relative residual {residual:e})")]
    PowerIteration { iterations: usize, residual: f64 },
    #[error("reference solver hit the {iterations}-iteration cap with gradient norm {grad_norm:e}")]
    SolverCap { iterations: usize, grad_norm: f64 },
    #[error("reference solution not converged: gradient norm {grad_norm:e} > tolerance {tolerance:e}")]
    NotConverged { grad_norm: f64, tolerance: f64 },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

/// How many components one stochastic gradient averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Batch {
    /// `b` components drawn uniformly with replacement.
    Sampled(usize),
    /// Exhaustive sweep over the node's components (the exact node gradient).
    Full,
}

impl fmt::Display for Batch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Batch::Sampled(b) => write!(f, "{b}"),
            Batch::Full => f.write_str("full"),
        }
    }
}

impl FromStr for Batch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(Batch::Full);
        }
        match s.parse::<usize>() {
            Ok(b) if b >= 1 => Ok(Batch::Sampled(b)),
            _ => Err(format!("batch must be a positive integer or `full`, got {s:?}")),
        }
    }
}

/// A finite-sum objective distributed over nodes.
///
/// The unchecked slice methods are the simulator's hot path; the checked
/// `DenseVector` versions live on [`ObjectiveExt`].
pub trait Objective<S: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn num_nodes(&self) -> usize;
    fn regime(&self) -> Regime;
    /// Smoothness constant `L` of every `f_m`.
    fn smoothness(&self) -> S;
    /// Smoothness shared by every individual component.
    fn component_smoothness(&self) -> S {
        self.smoothness()
    }
    /// Strong-convexity constant `μ ≥ 0` of every `f_m`.
    fn strong_convexity(&self) -> S;
    /// Extra zero-mean noise `E‖ξ‖²` added to every single-component draw.
    fn injected_noise_sq(&self) -> S {
        S::zero()
    }
    fn num_components(&self, node: usize) -> usize;
    fn component_loss(&self, node: usize, k: usize, x: &[S]) -> S;
    /// `out += scale · ∇f_{node,k}(x)`.
    fn add_component_grad(&self, node: usize, k: usize, x: &[S], scale: S, out: &mut [S]);

    fn node_loss(&self, node: usize, x: &[S]) -> S {
        let n = self.num_components(node);
        let mut acc = S::zero();
        for k in 0..n {
            acc += self.component_loss(node, k, x);
        }
        acc / S::of_usize(n)
    }

    /// `out += scale · ∇f_node(x)`.
    fn add_node_grad(&self, node: usize, x: &[S], scale: S, out: &mut [S]) {
        let n = self.num_components(node);
        let w = scale / S::of_usize(n);
        for k in 0..n {
            self.add_component_grad(node, k, x, w, out);
        }
    }

    /// Overwrites `out` with a stochastic gradient of `f_node` at `x`.
    fn sample_grad_into(&self, node: usize, x: &[S], rng: &mut RngStream, batch: Batch, out: &mut [S]) {
        out.iter_mut().for_each(|o| *o = S::zero());
        match batch {
            Batch::Full => self.add_node_grad(node, x, S::one(), out),
            Batch::Sampled(b) => {
                let n = self.num_components(node);
                let w = S::one() / S::of_usize(b);
                for _ in 0..b {
                    let k = rng.draw_index(n).expect("nodes are nonempty");
                    self.add_component_grad(node, k, x, w, out);
                }
            }
        }
    }

    /// `f(x) = (1/M) Σ_m f_m(x)`.
    fn global_loss(&self, x: &[S]) -> S {
        if self.regime() == Regime::Identical {
            return self.node_loss(0, x);
        }
        let m = self.num_nodes();
        let mut acc = S::zero();
        for node in 0..m {
            acc += self.node_loss(node, x);
        }
        acc / S::of_usize(m)
    }

    /// Overwrites `out` with `∇f(x)`.
    fn global_grad_into(&self, x: &[S], out: &mut [S]) {
        out.iter_mut().for_each(|o| *o = S::zero());
        if self.regime() == Regime::Identical {
            self.add_node_grad(0, x, S::one(), out);
            return;
        }
        let m = self.num_nodes();
        let w = S::one() / S::of_usize(m);
        for node in 0..m {
            self.add_node_grad(node, x, w, out);
        }
    }
}

/// Dimension- and index-checked wrappers over [`Objective`].
pub trait ObjectiveExt<S: Scalar>: Objective<S> {
    fn check_point(&self, x: &DenseVector<S>) -> Result<(), ObjectiveError> {
        if x.dim() != self.dim() {
            return Err(NumError::DimensionMismatch { left: self.dim(), right: x.dim() }.into());
        }
        Ok(())
    }

    fn check_node(&self, node: usize) -> Result<(), ObjectiveError> {
        if node >= self.num_nodes() {
            return Err(ObjectiveError::NodeOutOfRange { node, nodes: self.num_nodes() });
        }
        if self.num_components(node) == 0 {
            return Err(ObjectiveError::EmptyNode { node });
        }
        Ok(())
    }

    fn loss(&self, x: &DenseVector<S>) -> Result<S, ObjectiveError> {
        self.check_point(x)?;
        Ok(self.global_loss(x.as_slice()))
    }

    fn node_loss_at(&self, node: usize, x: &DenseVector<S>) -> Result<S, ObjectiveError> {
        self.check_point(x)?;
        self.check_node(node)?;
        Ok(self.node_loss(node, x.as_slice()))
    }

    fn full_grad(&self, node: usize, x: &DenseVector<S>) -> Result<DenseVector<S>, ObjectiveError> {
        self.check_point(x)?;
        self.check_node(node)?;
        let mut out = DenseVector::zeros(self.dim());
        self.add_node_grad(node, x.as_slice(), S::one(), out.as_mut_slice());
        Ok(out)
    }

    fn full_grad_global(&self, x: &DenseVector<S>) -> Result<DenseVector<S>, ObjectiveError> {
        self.check_point(x)?;
        let mut out = DenseVector::zeros(self.dim());
        self.global_grad_into(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    fn stochastic_grad(
        &self,
        node: usize,
        x: &DenseVector<S>,
        rng: &mut RngStream,
        batch: Batch,
    ) -> Result<DenseVector<S>, ObjectiveError> {
        self.check_point(x)?;
        self.check_node(node)?;
        if batch == Batch::Sampled(0) {
            return Err(ObjectiveError::Invalid("batch must be at least 1".into()));
        }
        let mut out = DenseVector::zeros(self.dim());
        self.sample_grad_into(node, x.as_slice(), rng, batch, out.as_mut_slice());
        Ok(out)
    }

    /// Gradient of a single component.
    fn component_grad(&self, node: usize, k: usize, x: &DenseVector<S>) -> Result<DenseVector<S>, ObjectiveError> {
        self.check_point(x)?;
        self.check_node(node)?;
        if k >= self.num_components(node) {
            return Err(ObjectiveError::Invalid(format!("component {k} out of range")));
        }
        let mut out = DenseVector::zeros(self.dim());
        self.add_component_grad(node, k, x.as_slice(), S::one(), out.as_mut_slice());
        Ok(out)
    }
}

impl<S: Scalar, O: Objective<S> + ?Sized> ObjectiveExt<S> for O {}
