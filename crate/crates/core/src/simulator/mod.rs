//! Local SGD and minibatch SGD engines with per-step traces.

mod config;
mod engine;
mod replicate;
mod schedule;
mod trace;

pub use config::{FaultInjection, GradientMode, RunConfig};
pub use engine::{compute_vt, run_local_sgd, run_minibatch_sgd, LocalSgd};
pub use replicate::{run_replicated, run_replicated_traces, AggregateTrace, MeanSe};
pub use schedule::SyncSchedule;
pub use trace::{Trace, TraceRecord};

use thiserror::Error;

use crate::numkit::NumError;
use crate::objective::ObjectiveError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("diverged at step {t}{} (norm {norm:e})", node.map(|n| format!(" on node {n}")).unwrap_or_default())]
    Diverged { t: usize, node: Option<usize>, norm: f64 },
    #[error("trace mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Num(#[from] NumError),
}
