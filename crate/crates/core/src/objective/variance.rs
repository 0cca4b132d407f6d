//! Exact gradient-noise statistics at the optimum, computed by enumerating
//! every component of every node.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dataio::Regime;
use crate::numkit::DenseVector;
use crate::objective::{Batch, Objective, ObjectiveError, Problem, ReferenceSolution};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceReport<S> {
    /// Probe-set estimate of the uniform variance bound. Never exact.
    pub sigma_sq: S,
    pub sigma_opt_sq: S,
    pub sigma_dif_sq: S,
    /// `(1/M) Σ_m ‖∇f_m(x*)‖²` on the heterogeneous split.
    pub dif_lower_bound: S,
    /// `σ_m²` for each node under the problem's own regime.
    pub per_node_sigma_sq: Vec<S>,
    pub batch: Batch,
    pub nodes: usize,
    pub regime: Regime,
    pub probes: usize,
}

impl<S: Scalar> VarianceReport<S> {
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes={}", self.nodes);
        let _ = writeln!(out, "regime={}", self.regime);
        let _ = writeln!(out, "batch={}", self.batch);
        let _ = writeln!(out, "sigma_sq={:e}", self.sigma_sq.as_f64());
        let _ = writeln!(out, "sigma_sq_is_estimate=true");
        let _ = writeln!(out, "sigma_sq_probes={}", self.probes);
        let _ = writeln!(out, "sigma_opt_sq={:e}", self.sigma_opt_sq.as_f64());
        let _ = writeln!(out, "sigma_dif_sq={:e}", self.sigma_dif_sq.as_f64());
        let _ = writeln!(out, "dif_lower_bound={:e}", self.dif_lower_bound.as_f64());
        out
    }

    /// One row per node: `node,sigma_m_sq`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,sigma_m_sq\n");
        for (m, v) in self.per_node_sigma_sq.iter().enumerate() {
            let _ = writeln!(out, "{m},{:e}", v.as_f64());
        }
        out
    }
}

struct NodeStats<S> {
    mean_sq: S,
    /// `(1/n) Σ_k ‖∇f_k(x) − ∇f_node(x)‖²` plus injected noise.
    spread: S,
}

fn node_stats<S: Scalar, O: Objective<S> + ?Sized>(obj: &O, node: usize, x: &[S]) -> NodeStats<S> {
    let d = obj.dim();
    let n = obj.num_components(node);
    let mut mean = vec![S::zero(); d];
    let w = S::one() / S::of_usize(n);
    for k in 0..n {
        obj.add_component_grad(node, k, x, w, &mut mean);
    }
    let mut g = vec![S::zero(); d];
    let mut spread = S::zero();
    for k in 0..n {
        g.iter_mut().for_each(|v| *v = S::zero());
        obj.add_component_grad(node, k, x, S::one(), &mut g);
        spread += g.iter().zip(&mean).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<S>();
    }
    NodeStats {
        mean_sq: mean.iter().map(|v| *v * *v).sum(),
        spread: spread * w + obj.injected_noise_sq(),
    }
}

fn sigma_from_stats<S: Scalar>(st: &NodeStats<S>, batch: Batch) -> S {
    match batch {
        Batch::Full => st.mean_sq,
        Batch::Sampled(b) => st.mean_sq + st.spread / S::of_usize(b),
    }
}

fn all_node_stats<S: Scalar, O: Objective<S> + ?Sized>(obj: &O, x: &[S]) -> Vec<NodeStats<S>> {
    if obj.regime() == Regime::Identical {
        let st = node_stats(obj, 0, x);
        return (0..obj.num_nodes()).map(|_| NodeStats { mean_sq: st.mean_sq, spread: st.spread }).collect();
    }
    (0..obj.num_nodes()).into_par_iter().map(|m| node_stats(obj, m, x)).collect()
}

/// `σ_m² = E‖g_m(x)‖²` for one draw of the given batch size at `x`.
pub fn node_optimum_noise<S: Scalar, O: Objective<S> + ?Sized>(
    obj: &O,
    node: usize,
    x: &DenseVector<S>,
    batch: Batch,
) -> Result<S, ObjectiveError> {
    if node >= obj.num_nodes() {
        return Err(ObjectiveError::NodeOutOfRange { node, nodes: obj.num_nodes() });
    }
    if x.dim() != obj.dim() {
        return Err(crate::numkit::NumError::DimensionMismatch { left: obj.dim(), right: x.dim() }.into());
    }
    Ok(sigma_from_stats(&node_stats(obj, node, x.as_slice()), batch))
}

fn mean_of<S: Scalar>(v: &[S]) -> S {
    v.iter().copied().sum::<S>() / S::of_usize(v.len())
}

/// Builds a report from three views of the same finite sum: the identical
/// split (for `σ_opt²`), the heterogeneous split (for `σ_dif²`), and the
/// split under study (for per-node values and the probe estimate).
pub fn variance_report_from_views<S, I, H, P>(
    identical: &I,
    heterogeneous: &H,
    studied: &P,
    x_star: &DenseVector<S>,
    batch: Batch,
    probes: &[DenseVector<S>],
) -> Result<VarianceReport<S>, ObjectiveError>
where
    S: Scalar,
    I: Objective<S> + ?Sized,
    H: Objective<S> + ?Sized,
    P: Objective<S> + ?Sized,
{
    if batch == Batch::Sampled(0) {
        return Err(ObjectiveError::Invalid("batch must be at least 1".into()));
    }
    for p in std::iter::once(x_star).chain(probes) {
        if p.dim() != studied.dim() {
            return Err(crate::numkit::NumError::DimensionMismatch { left: studied.dim(), right: p.dim() }.into());
        }
    }
    let xs = x_star.as_slice();
    let opt: Vec<S> = all_node_stats(identical, xs).iter().map(|s| sigma_from_stats(s, batch)).collect();
    let het_stats = all_node_stats(heterogeneous, xs);
    let dif: Vec<S> = het_stats.iter().map(|s| sigma_from_stats(s, batch)).collect();
    let dif_lower: Vec<S> = het_stats.iter().map(|s| s.mean_sq).collect();
    let per_node: Vec<S> = all_node_stats(studied, xs).iter().map(|s| sigma_from_stats(s, batch)).collect();

    let mut sigma_sq = S::zero();
    let mut points: Vec<Vec<S>> = vec![vec![S::zero(); xs.len()], xs.to_vec()];
    points.push(xs.iter().map(|v| *v * S::of(0.5)).collect());
    points.push(xs.iter().map(|v| *v * S::of(2.0)).collect());
    points.extend(probes.iter().map(|p| p.as_slice().to_vec()));
    if let Batch::Sampled(b) = batch {
        for pt in &points {
            for st in all_node_stats(studied, pt) {
                sigma_sq = sigma_sq.max(st.spread / S::of_usize(b));
            }
        }
    }

    Ok(VarianceReport {
        sigma_sq,
        sigma_opt_sq: mean_of(&opt),
        sigma_dif_sq: mean_of(&dif),
        dif_lower_bound: mean_of(&dif_lower),
        per_node_sigma_sq: per_node,
        batch,
        nodes: studied.num_nodes(),
        regime: studied.regime(),
        probes: points.len(),
    })
}

/// Variance quantities of a logistic problem at its reference optimum.
///
/// `σ_opt²` uses `M` copies of the full dataset, `σ_dif²` the contiguous
/// `M`-block split, regardless of the problem's own regime.
pub fn measure_variances<S: Scalar>(
    problem: &Problem<S>,
    reference: &ReferenceSolution<S>,
    batch: Batch,
    probes: &[DenseVector<S>],
) -> Result<VarianceReport<S>, ObjectiveError> {
    if !(reference.grad_norm <= reference.tolerance) {
        return Err(ObjectiveError::NotConverged { grad_norm: reference.grad_norm, tolerance: reference.tolerance });
    }
    let m = problem.num_nodes();
    let identical = problem.repartition(m, Regime::Identical)?;
    let heterogeneous = problem.repartition(m, Regime::Heterogeneous)?;
    variance_report_from_views(&identical, &heterogeneous, problem, &reference.x_star, batch, probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, partition, SyntheticSpec};
    use crate::numkit::RngStream;
    use crate::objective::{solve_reference, ObjectiveExt, QuadraticComponent, QuadraticProblem, SolverOptions};
    use std::sync::Arc;

    fn setup(nodes: usize, regime: Regime, sorted: bool) -> (Problem<f64>, ReferenceSolution<f64>) {
        let spec = SyntheticSpec { n: 240, dim: 6, seed: 9, sort_by_label: sorted, ..Default::default() };
        let ds = Arc::new(generate_synthetic::<f64>(&spec).unwrap());
        let part = partition(ds.len(), nodes, regime).unwrap();
        let p = Problem::new(ds, part, 1.0 / 240.0).unwrap();
        let r = solve_reference(&p, &SolverOptions { tol: 1e-11, ..Default::default() }).unwrap();
        (p, r)
    }

    #[test]
    fn single_node_identities() {
        let (p, r) = setup(1, Regime::Identical, false);
        for batch in [Batch::Sampled(1), Batch::Sampled(4), Batch::Full] {
            let v = measure_variances(&p, &r, batch, &[]).unwrap();
            assert_eq!(v.sigma_opt_sq, v.sigma_dif_sq);
            assert_eq!(v.per_node_sigma_sq.len(), 1);
        }
    }

    #[test]
    fn full_batch_dif_equals_gradient_norms() {
        let (p, r) = setup(4, Regime::Heterogeneous, true);
        let v = measure_variances(&p, &r, Batch::Full, &[]).unwrap();
        let mut oracle = 0.0;
        for m in 0..4 {
            oracle += p.full_grad(m, &r.x_star).unwrap().norm_sq() / 4.0;
        }
        assert!((v.sigma_dif_sq - oracle).abs() <= 1e-10 * oracle.max(1e-300));
        assert_eq!(v.sigma_sq, 0.0);
    }

    #[test]
    fn heterogeneity_and_batch_ordering() {
        let (p, r) = setup(4, Regime::Heterogeneous, true);
        let b1 = measure_variances(&p, &r, Batch::Sampled(1), &[]).unwrap();
        let b4 = measure_variances(&p, &r, Batch::Sampled(4), &[]).unwrap();
        // law of total variance over equal blocks:
        // σ_dif² − σ_opt² = (1 − 1/b)(1/M) Σ‖∇f_m(x*)‖²
        for (v, b) in [(&b1, 1.0), (&b4, 4.0)] {
            let gap = v.sigma_dif_sq - v.sigma_opt_sq;
            let oracle = (1.0 - 1.0 / b) * v.dif_lower_bound;
            assert!((gap - oracle).abs() <= 1e-12 * v.sigma_opt_sq, "{gap} vs {oracle}");
        }
        assert!(b4.sigma_dif_sq > b4.sigma_opt_sq);
        assert!(b4.sigma_dif_sq < b1.sigma_dif_sq && b4.sigma_opt_sq < b1.sigma_opt_sq);
        assert!(b1.sigma_dif_sq >= b1.dif_lower_bound);
        assert!(b1.sigma_sq > 0.0);
    }

    #[test]
    fn identical_regime_per_node_mean_is_sigma_opt() {
        let (p, r) = setup(3, Regime::Identical, false);
        let v = measure_variances(&p, &r, Batch::Sampled(2), &[]).unwrap();
        let mean = v.per_node_sigma_sq.iter().sum::<f64>() / 3.0;
        assert_eq!(mean, v.sigma_opt_sq);
    }

    #[test]
    fn monte_carlo_agrees_with_enumeration() {
        let (p, r) = setup(2, Regime::Heterogeneous, true);
        let exact = node_optimum_noise(&p, 1, &r.x_star, Batch::Sampled(3)).unwrap();
        let mut rng = RngStream::new(1, 1);
        let draws = 40_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let g = p.stochastic_grad(1, &r.x_star, &mut rng, Batch::Sampled(3)).unwrap().norm_sq();
            s += g;
            s2 += g * g;
        }
        let mean = s / draws as f64;
        let se = ((s2 / draws as f64 - mean * mean) / draws as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact}");
    }

    #[test]
    fn interpolation_has_zero_dif() {
        let c = vec![1.0, -1.0];
        let comps = |h: f64| vec![QuadraticComponent::new(vec![h, 2.0 * h], c.clone()).unwrap()];
        let het = QuadraticProblem::heterogeneous(vec![comps(1.0), comps(3.0)], 0.0).unwrap();
        let (x, _) = het.optimum();
        let v = variance_report_from_views(&het, &het, &het, &x, Batch::Sampled(1), &[]).unwrap();
        assert_eq!(v.sigma_dif_sq, 0.0);
        assert_eq!(v.dif_lower_bound, 0.0);
    }

    #[test]
    fn unconverged_reference_is_rejected() {
        let (p, mut r) = setup(1, Regime::Identical, false);
        r.grad_norm = 1.0;
        assert!(matches!(
            measure_variances(&p, &r, Batch::Sampled(1), &[]),
            Err(ObjectiveError::NotConverged { .. })
        ));
    }
}
