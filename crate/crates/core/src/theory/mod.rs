//! Right-hand sides of the convergence bounds, the interval and stepsize planners, and
//! bound-versus-simulation verdicts.

mod bounds;
mod planner;
mod verdict;

pub use bounds::{formula, het_gap_limit, stepsize_limit, BoundCurve, BoundInputs, Metric, TheoremId};
pub use planner::{plan_gamma, plan_h, GammaRule, HRule, StepsizePlan};
pub use verdict::{check_bound, check_bound_with, check_het_gradient_bound, check_deviation_bound, Verdict};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("{theorem} precondition violated: {condition}")]
    Precondition { theorem: TheoremId, condition: String },
    #[error("{rule} hypothesis unmet: {condition}")]
    Hypothesis { rule: String, condition: String },
    #[error("missing input {0}")]
    MissingInput(&'static str),
    #[error("bound restricted to sync steps; t = {t} is not one")]
    NotASyncStep { t: usize },
    #[error("metric mismatch: bound is on {expected}, asked for {found}")]
    MetricMismatch { expected: Metric, found: Metric },
    #[error("no comparable steps")]
    NoComparableSteps,
    #[error("invalid input: {0}")]
    Invalid(String),
}
