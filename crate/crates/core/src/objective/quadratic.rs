//! Separable quadratic finite sums with optional additive Gaussian gradient
//! noise. Used where a known optimum, exact constants, or an exactly bounded
//! noise level are needed.

use rand_distr::{Distribution, StandardNormal};

use crate::dataio::Regime;
use crate::numkit::{DenseVector, RngStream};
use crate::objective::{Batch, Objective, ObjectiveError};
use crate::scalar::Scalar;

/// `½ Σ_j h_j (x_j − c_j)²` with every `h_j > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticComponent<S> {
    pub curvature: Vec<S>,
    pub center: Vec<S>,
}

impl<S: Scalar> QuadraticComponent<S> {
    pub fn new(curvature: Vec<S>, center: Vec<S>) -> Result<Self, ObjectiveError> {
        if curvature.is_empty() || curvature.len() != center.len() {
            return Err(ObjectiveError::Invalid("curvature and center must have equal, nonzero length".into()));
        }
        if curvature.iter().any(|h| !(*h > S::zero()) || !h.is_finite()) {
            return Err(ObjectiveError::Invalid("curvatures must be positive and finite".into()));
        }
        Ok(Self { curvature, center })
    }

    /// `½‖x − c‖²`.
    pub fn isotropic(center: Vec<S>) -> Self {
        Self { curvature: vec![S::one(); center.len()], center }
    }
}

#[derive(Clone, Debug)]
pub struct QuadraticProblem<S> {
    nodes: Vec<Vec<QuadraticComponent<S>>>,
    num_nodes: usize,
    regime: Regime,
    noise_sq: S,
    dim: usize,
    smoothness: S,
    strong_convexity: S,
}

impl<S: Scalar> QuadraticProblem<S> {
    /// Every node sees the same finite sum.
    pub fn identical(components: Vec<QuadraticComponent<S>>, nodes: usize, noise_sq: S) -> Result<Self, ObjectiveError> {
        Self::build(vec![components], nodes, Regime::Identical, noise_sq)
    }

    /// Node `m` owns `nodes[m]`.
    pub fn heterogeneous(nodes: Vec<Vec<QuadraticComponent<S>>>, noise_sq: S) -> Result<Self, ObjectiveError> {
        let m = nodes.len();
        Self::build(nodes, m, Regime::Heterogeneous, noise_sq)
    }

    fn build(
        nodes: Vec<Vec<QuadraticComponent<S>>>,
        num_nodes: usize,
        regime: Regime,
        noise_sq: S,
    ) -> Result<Self, ObjectiveError> {
        if num_nodes == 0 {
            return Err(ObjectiveError::Invalid("at least one node is required".into()));
        }
        if !(noise_sq >= S::zero()) || !noise_sq.is_finite() {
            return Err(ObjectiveError::Invalid("noise variance must be finite and >= 0".into()));
        }
        if let Some(node) = nodes.iter().position(|c| c.is_empty()) {
            return Err(ObjectiveError::EmptyNode { node });
        }
        let dim = nodes[0][0].curvature.len();
        let mut smoothness = S::zero();
        let mut strong_convexity = S::infinity();
        for c in nodes.iter().flatten() {
            if c.curvature.len() != dim {
                return Err(ObjectiveError::Invalid("components disagree on dimension".into()));
            }
            for h in &c.curvature {
                smoothness = smoothness.max(*h);
                strong_convexity = strong_convexity.min(*h);
            }
        }
        Ok(Self { nodes, num_nodes, regime, noise_sq, dim, smoothness, strong_convexity })
    }

    fn components(&self, node: usize) -> &[QuadraticComponent<S>] {
        match self.regime {
            Regime::Identical => &self.nodes[0],
            Regime::Heterogeneous => &self.nodes[node],
        }
    }

    /// Injected noise variance `E‖ξ‖²` for a single draw.
    pub fn noise_sq(&self) -> S {
        self.noise_sq
    }

    /// Closed-form minimizer of `f` and its value.
    pub fn optimum(&self) -> (DenseVector<S>, S) {
        let mut num = vec![S::zero(); self.dim];
        let mut den = vec![S::zero(); self.dim];
        let groups = match self.regime {
            Regime::Identical => 1,
            Regime::Heterogeneous => self.num_nodes,
        };
        for node in 0..groups {
            let comps = self.components(node);
            let w = S::one() / S::of_usize(comps.len());
            for c in comps {
                for j in 0..self.dim {
                    num[j] += w * c.curvature[j] * c.center[j];
                    den[j] += w * c.curvature[j];
                }
            }
        }
        let x = DenseVector::from_vec_unchecked(num.iter().zip(&den).map(|(n, d)| *n / *d).collect());
        let f = self.global_loss(x.as_slice());
        (x, f)
    }
}

impl<S: Scalar> Objective<S> for QuadraticProblem<S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    fn regime(&self) -> Regime {
        self.regime
    }

    fn smoothness(&self) -> S {
        self.smoothness
    }

    fn strong_convexity(&self) -> S {
        self.strong_convexity
    }

    fn injected_noise_sq(&self) -> S {
        self.noise_sq
    }

    fn num_components(&self, node: usize) -> usize {
        self.components(node).len()
    }

    fn component_loss(&self, node: usize, k: usize, x: &[S]) -> S {
        let c = &self.components(node)[k];
        let mut acc = S::zero();
        for j in 0..self.dim {
            let d = x[j] - c.center[j];
            acc += c.curvature[j] * d * d;
        }
        S::of(0.5) * acc
    }

    fn add_component_grad(&self, node: usize, k: usize, x: &[S], scale: S, out: &mut [S]) {
        let c = &self.components(node)[k];
        for j in 0..self.dim {
            out[j] += scale * c.curvature[j] * (x[j] - c.center[j]);
        }
    }

    fn sample_grad_into(&self, node: usize, x: &[S], rng: &mut RngStream, batch: Batch, out: &mut [S]) {
        out.iter_mut().for_each(|o| *o = S::zero());
        match batch {
            Batch::Full => self.add_node_grad(node, x, S::one(), out),
            Batch::Sampled(b) => {
                let n = self.num_components(node);
                let w = S::one() / S::of_usize(b);
                if n == 1 {
                    self.add_component_grad(node, 0, x, S::one(), out);
                } else {
                    for _ in 0..b {
                        let k = rng.draw_index(n).expect("nodes are nonempty");
                        self.add_component_grad(node, k, x, w, out);
                    }
                }
                if self.noise_sq > S::zero() {
                    let sd = (self.noise_sq.as_f64() / (self.dim as f64 * b as f64)).sqrt();
                    for o in out.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *o += S::of(sd * z);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::ObjectiveExt;
    use approx::assert_relative_eq;

    #[test]
    fn isotropic_optimum() {
        let c = vec![1.0, -2.0, 3.5];
        let p = QuadraticProblem::identical(vec![QuadraticComponent::isotropic(c.clone())], 1, 0.0).unwrap();
        let (x, f) = p.optimum();
        assert_eq!(x.as_slice(), c.as_slice());
        assert_eq!(f, 0.0);
        assert_eq!((p.smoothness(), p.strong_convexity()), (1.0, 1.0));
    }

    #[test]
    fn heterogeneous_optimum_zeroes_gradient() {
        let a = QuadraticComponent::new(vec![1.0, 4.0], vec![0.0, 1.0]).unwrap();
        let b = QuadraticComponent::new(vec![3.0, 0.5], vec![2.0, -1.0]).unwrap();
        let p = QuadraticProblem::heterogeneous(vec![vec![a], vec![b]], 0.0).unwrap();
        let (x, _) = p.optimum();
        let g = p.full_grad_global(&x).unwrap();
        assert!(g.norm() < 1e-14);
        assert_eq!((p.smoothness(), p.strong_convexity()), (4.0, 0.5));
    }

    #[test]
    fn injected_noise_has_requested_variance() {
        let p = QuadraticProblem::identical(vec![QuadraticComponent::isotropic(vec![0.0; 8])], 1, 2.0).unwrap();
        let x = DenseVector::zeros(8);
        let mut rng = RngStream::new(17, 0);
        let draws = 20_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            acc += p.stochastic_grad(0, &x, &mut rng, Batch::Sampled(4)).unwrap().norm_sq();
        }
        // E‖ξ‖² = 2/4; ‖ξ‖²·(16/2) ~ χ²₈ so sd of the mean is 0.5·(16/8)^½/√draws
        let mean = acc / draws as f64;
        let se = 0.5 * (2.0f64 / 8.0 * 2.0).sqrt() / (draws as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se, "{mean}");
        let full = p.stochastic_grad(0, &x, &mut rng, Batch::Full).unwrap();
        assert_eq!(full.norm_sq(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(QuadraticComponent::new(vec![0.0], vec![1.0]).is_err());
        assert!(QuadraticComponent::new(vec![1.0], vec![]).is_err());
        assert!(QuadraticProblem::<f64>::heterogeneous(vec![vec![]], 0.0).is_err());
        let c = QuadraticComponent::isotropic(vec![0.0]);
        assert_relative_eq!(QuadraticProblem::identical(vec![c], 3, 0.0).unwrap().num_nodes() as f64, 3.0);
    }
}
