use std::fmt::Write as _;

use crate::scalar::Scalar;
use crate::simulator::{AggregateTrace, MeanSe, Trace};
use crate::theory::{BoundCurve, Metric, TheoremId, TheoryError};

/// Outcome of comparing Monte-Carlo means against a bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    /// What was checked, e.g. a theorem id.
    pub subject: String,
    /// Mean ≤ bound + 3·SE at every compared step.
    pub holds: bool,
    /// Smallest `bound − mean` over compared steps.
    pub margin: f64,
    /// Largest `mean / bound` over compared steps.
    pub slack_ratio: f64,
    pub worst_step: usize,
    pub compared_steps: usize,
    pub rhs_estimated: bool,
    pub details: String,
}

impl Verdict {
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "subject={}", self.subject);
        let _ = writeln!(out, "holds={}", self.holds);
        let _ = writeln!(out, "margin={:e}", self.margin);
        let _ = writeln!(out, "slack_ratio={:e}", self.slack_ratio);
        let _ = writeln!(out, "worst_step={}", self.worst_step);
        let _ = writeln!(out, "compared_steps={}", self.compared_steps);
        let _ = writeln!(out, "rhs_estimated={}", self.rhs_estimated);
        let _ = writeln!(out, "details={}", self.details);
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} (margin {:.3e}, slack {:.3}, {} steps, worst t={})",
            self.subject,
            if self.holds { "holds" } else { "VIOLATED" },
            self.margin,
            self.slack_ratio,
            self.compared_steps,
            self.worst_step
        )
    }
}

/// Running comparison over a set of `(t, mean, se, bound)` points.
struct Tally {
    holds: bool,
    margin: f64,
    slack: f64,
    worst_step: usize,
    worst_excess: f64,
    n: usize,
}

impl Tally {
    fn new() -> Self {
        Self { holds: true, margin: f64::INFINITY, slack: 0.0, worst_step: 0, worst_excess: f64::NEG_INFINITY, n: 0 }
    }

    fn add(&mut self, t: usize, stat: MeanSe, bound: f64) {
        self.n += 1;
        let excess = stat.mean - bound - 3.0 * stat.se;
        if excess > 0.0 || excess.is_nan() {
            self.holds = false;
        }
        if excess > self.worst_excess || self.n == 1 {
            self.worst_excess = excess;
            self.worst_step = t;
        }
        self.margin = self.margin.min(bound - stat.mean);
        let ratio = if bound > 0.0 {
            stat.mean / bound
        } else if stat.mean > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        self.slack = self.slack.max(ratio);
    }

    fn into_verdict(self, subject: String, rhs_estimated: bool, details: String) -> Result<Verdict, TheoryError> {
        if self.n == 0 {
            return Err(TheoryError::NoComparableSteps);
        }
        Ok(Verdict {
            subject,
            holds: self.holds,
            margin: self.margin,
            slack_ratio: self.slack,
            worst_step: self.worst_step,
            compared_steps: self.n,
            rhs_estimated,
            details,
        })
    }
}

/// Compares a bound with the matching statistic of an aggregate trace.
pub fn check_bound(curve: &BoundCurve, agg: &AggregateTrace) -> Result<Verdict, TheoryError> {
    check_bound_with(curve, agg, curve.metric)
}

/// [`check_bound`] with an explicitly requested metric, which must match
/// the bound's.
///
/// Strongly convex bounds are compared at every recorded step where they
/// apply (only sync steps for the finite-sum one); convex bounds compare
/// `f(x̄_T) − f*` with the theorem's averaging convention at `T`.
pub fn check_bound_with(curve: &BoundCurve, agg: &AggregateTrace, metric: Metric) -> Result<Verdict, TheoryError> {
    if metric != curve.metric {
        return Err(TheoryError::MetricMismatch { expected: curve.metric, found: metric });
    }
    let last = *agg.steps.last().ok_or(TheoryError::NoComparableSteps)?;
    if last != curve.inputs.t {
        return Err(TheoryError::Invalid(format!("trace ends at T = {last} but the bound is for T = {}", curve.inputs.t)));
    }
    let mut tally = Tally::new();
    let details;
    match curve.metric {
        Metric::DistSq => {
            let mut abstained = 0;
            for (k, &t) in agg.steps.iter().enumerate() {
                let applies = curve.applies_at(t) && (curve.theorem != TheoremId::ScIidFs || agg.synced[k]);
                if !applies {
                    abstained += 1;
                    continue;
                }
                tally.add(t, agg.dist_sq[k], curve.rhs_at(t)?);
            }
            details = format!("{} vs mean dist_sq; abstained at {abstained} non-sync steps", curve.theorem);
        }
        Metric::Subopt => {
            let (stat, conv) = if curve.theorem == TheoremId::WcHetFs {
                (agg.bar_x_lagged_subopt, "x̄ over t=0..T-1")
            } else {
                (agg.bar_x_subopt, "x̄ over t=1..T")
            };
            tally.add(last, stat, curve.final_value()?);
            details = format!("{} vs mean f(x̄_T)-f* with {conv}", curve.theorem);
        }
    }
    tally.into_verdict(curve.theorem.to_string(), curve.rhs_estimated, details)
}

/// Mean `V_t ≤ (H−1)γ²σ² + 3·SE` at every recorded step. Requires
/// `γ ≤ 1/(2L)`.
pub fn check_deviation_bound(
    agg: &AggregateTrace,
    l: f64,
    gamma: f64,
    h: usize,
    sigma_sq: f64,
    sigma_estimated: bool,
) -> Result<Verdict, TheoryError> {
    if !(gamma > 0.0) || !(l > 0.0) || !crate::theory::bounds::within(gamma, 1.0 / (2.0 * l)) {
        return Err(TheoryError::Invalid(format!("the V_t bound needs 0 < gamma <= 1/(2L), got {gamma:e}")));
    }
    if h == 0 {
        return Err(TheoryError::Invalid("H must be positive".into()));
    }
    let bound = (h - 1) as f64 * gamma * gamma * sigma_sq;
    let mut tally = Tally::new();
    for (k, &t) in agg.steps.iter().enumerate() {
        tally.add(t, agg.v_t[k], bound);
    }
    tally.into_verdict("DEVIATION_VT".into(), sigma_estimated, format!("mean V_t vs (H-1)γ²σ² = {bound:e}"))
}

/// Heterogeneous average-gradient bound
/// `E‖g_t‖² ≤ 2L²V_t + 8L(f(x̂_t) − f*) + 4σ_dif²/M`, checked on per-seed
/// differences `‖g_t‖² − 2L²V_t − 8L(f(x̂_t) − f*)` against `4σ_dif²/M`.
pub fn check_het_gradient_bound<S: Scalar>(
    traces: &[Trace<S>],
    l_component: f64,
    sigma_dif_sq: f64,
    m: usize,
) -> Result<Verdict, TheoryError> {
    if m < 2 {
        return Err(TheoryError::Invalid("the average-gradient bound needs M >= 2".into()));
    }
    let Some(first) = traces.first() else {
        return Err(TheoryError::NoComparableSteps);
    };
    let bound = 4.0 * sigma_dif_sq / m as f64;
    let mut tally = Tally::new();
    for (k, rec) in first.records.iter().enumerate() {
        if rec.grad_sq.is_none() {
            continue;
        }
        let mut diffs = Vec::with_capacity(traces.len());
        for tr in traces {
            let r = tr.records.get(k).filter(|r| r.t == rec.t).ok_or_else(|| {
                TheoryError::Invalid("traces use different recording grids".into())
            })?;
            let g = r.grad_sq.map(|g| g.as_f64()).unwrap_or(f64::NAN);
            diffs.push(g - 2.0 * l_component * l_component * r.v_t.as_f64() - 8.0 * l_component * r.subopt.as_f64());
        }
        tally.add(rec.t, MeanSe::of(&diffs), bound);
    }
    tally.into_verdict(
        "HET_GRAD_BOUND".into(),
        false,
        format!("mean of ‖g_t‖² - 2L²V_t - 8L·D_f vs 4σ_dif²/M = {bound:e}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Regime;
    use crate::numkit::DenseVector;
    use crate::objective::{Objective, QuadraticComponent, QuadraticProblem, ReferenceSolution};
    use crate::simulator::{run_replicated, GradientMode, RunConfig, SyncSchedule};
    use crate::theory::BoundInputs;

    fn quad(noise: f64, m: usize) -> (QuadraticProblem<f64>, ReferenceSolution<f64>) {
        let q = QuadraticProblem::identical(
            vec![QuadraticComponent::new(vec![1.0, 0.5, 0.25], vec![1.0, -2.0, 3.0]).unwrap()],
            m,
            noise,
        )
        .unwrap();
        let (x, f) = q.optimum();
        (q, ReferenceSolution::exact(x, f))
    }

    #[test]
    fn gd_contraction_holds_deterministically() {
        let (q, r) = quad(0.0, 2);
        let l = q.smoothness();
        let gamma = 1.0 / (4.0 * l);
        let cfg = RunConfig::new(2, Regime::Identical, SyncSchedule::uniform(5, 200).unwrap(), gamma, DenseVector::zeros(3))
            .with_mode(GradientMode::Full)
            .with_record_every(1);
        let agg = run_replicated(&q, &cfg, &r, &[1, 2]).unwrap();
        let inputs = BoundInputs {
            l,
            mu: Some(q.strong_convexity()),
            gamma,
            t: 200,
            h: 5,
            m: 2,
            sigma_sq: Some(0.0),
            r0_sq: r.x_star.norm_sq(),
            ..Default::default()
        };
        let curve = BoundCurve::new(TheoremId::ScIidUbv, inputs).unwrap();
        let v = check_bound(&curve, &agg).unwrap();
        assert!(v.holds && v.margin >= 0.0, "{}", v.summary());
        assert_eq!(v.compared_steps, 201);
        assert!(matches!(check_bound_with(&curve, &agg, Metric::Subopt), Err(TheoryError::MetricMismatch { .. })));
    }

    #[test]
    fn deviation_bound_and_refusal() {
        let (q, r) = quad(1.0, 4);
        let l = q.smoothness();
        let gamma = 1.0 / (2.0 * l);
        let cfg = RunConfig::new(4, Regime::Identical, SyncSchedule::uniform(8, 64).unwrap(), gamma, DenseVector::zeros(3))
            .with_record_every(1);
        let seeds: Vec<u64> = (0..64).collect();
        let agg = run_replicated(&q, &cfg, &r, &seeds).unwrap();
        let v = check_deviation_bound(&agg, l, gamma, 8, 1.0, false).unwrap();
        assert!(v.holds, "{}", v.summary());
        assert!(check_deviation_bound(&agg, l, 2.0 / l, 8, 1.0, false).is_err());
        // deliberately understated noise must be caught
        let v = check_deviation_bound(&agg, l, gamma, 8, 0.01, false).unwrap();
        assert!(!v.holds);
    }

    #[test]
    fn het_gradient_bound_on_quadratics() {
        let a = QuadraticComponent::new(vec![1.0, 2.0], vec![1.0, 0.0]).unwrap();
        let b = QuadraticComponent::new(vec![1.0, 2.0], vec![-1.0, 2.0]).unwrap();
        let q = QuadraticProblem::heterogeneous(vec![vec![a.clone(), b.clone()], vec![b, a]], 0.0).unwrap();
        let (x, f) = q.optimum();
        let r = ReferenceSolution::exact(x.clone(), f);
        let cfg = RunConfig::new(2, Regime::Heterogeneous, SyncSchedule::uniform(4, 40).unwrap(), 0.1, DenseVector::zeros(2))
            .with_record_every(1);
        let traces = crate::simulator::run_replicated_traces(&q, &cfg, &r, &(0..50).collect::<Vec<_>>()).unwrap();
        let rep = crate::objective::variance_report_from_views(&q, &q, &q, &x, crate::objective::Batch::Sampled(1), &[]).unwrap();
        let v = check_het_gradient_bound(&traces, q.component_smoothness(), rep.sigma_dif_sq, 2).unwrap();
        assert!(v.holds, "{}", v.summary());
        assert_eq!(v.compared_steps, 40);
    }
}
