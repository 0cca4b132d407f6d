use std::fmt;
use std::str::FromStr;

use crate::dataio::Regime;
use crate::numkit::DenseVector;
use crate::objective::Batch;
use crate::scalar::Scalar;
use crate::simulator::{SimError, SyncSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GradientMode {
    Stochastic,
    /// Exact node gradients; the batch size is ignored.
    Full,
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradientMode::Stochastic => "stochastic",
            GradientMode::Full => "full",
        })
    }
}

impl FromStr for GradientMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stochastic" | "sgd" => Ok(GradientMode::Stochastic),
            "full" | "gd" => Ok(GradientMode::Full),
            other => Err(format!("unknown gradient mode {other:?}")),
        }
    }
}

/// Deliberate engine faults for mutation testing of the checks.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FaultInjection {
    #[default]
    None,
    /// Sync steps are recorded as synced but nodes are not averaged.
    SkipAveraging,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig<S> {
    pub nodes: usize,
    pub t: usize,
    pub schedule: SyncSchedule,
    pub gamma: S,
    pub batch: Batch,
    pub regime: Regime,
    pub gradient_mode: GradientMode,
    pub seed: u64,
    pub x0: DenseVector<S>,
    /// Record every this many steps, in addition to t = 0 and t = T.
    pub record_every: usize,
    /// Also record at every synchronization step.
    pub record_syncs: bool,
    /// Keep `x̂_t` in each record.
    pub record_iterates: bool,
    #[doc(hidden)]
    pub fault: FaultInjection,
}

impl<S: Scalar> RunConfig<S> {
    /// Stochastic, batch 1, seed 0, recording about 1000 evenly spaced steps
    /// plus every sync step.
    pub fn new(nodes: usize, regime: Regime, schedule: SyncSchedule, gamma: S, x0: DenseVector<S>) -> Self {
        let t = schedule.final_step();
        Self {
            nodes,
            t,
            schedule,
            gamma,
            batch: Batch::Sampled(1),
            regime,
            gradient_mode: GradientMode::Stochastic,
            seed: 0,
            x0,
            record_every: t.div_ceil(1000).max(1),
            record_syncs: true,
            record_iterates: false,
            fault: FaultInjection::None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_batch(mut self, batch: Batch) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_mode(mut self, mode: GradientMode) -> Self {
        self.gradient_mode = mode;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    /// The batch handed to the objective for each draw.
    pub fn effective_batch(&self) -> Batch {
        match self.gradient_mode {
            GradientMode::Full => Batch::Full,
            GradientMode::Stochastic => self.batch,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.nodes == 0 || self.t == 0 {
            return Err(SimError::Config("nodes and T must be positive".into()));
        }
        self.schedule.validate(self.t)?;
        if !(self.gamma >= S::zero()) || !self.gamma.is_finite() {
            return Err(SimError::Config(format!("stepsize must be finite and >= 0, got {}", self.gamma)));
        }
        if self.batch == Batch::Sampled(0) {
            return Err(SimError::Config("batch must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(SimError::Config("record_every must be positive".into()));
        }
        if !self.x0.is_finite() {
            return Err(SimError::Config("x0 must be finite".into()));
        }
        Ok(())
    }

    pub fn should_record(&self, t: usize) -> bool {
        t == 0 || t == self.t || t % self.record_every == 0 || (self.record_syncs && self.schedule.is_sync(t))
    }

    /// Key-value echo of every field except `x0`, which is summarized.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("nodes".to_string(), self.nodes.to_string()),
            ("T".into(), self.t.to_string()),
            ("H".into(), self.schedule.h().to_string()),
            ("schedule".into(), self.schedule.to_string()),
            ("comm_rounds".into(), self.schedule.comm_rounds().to_string()),
            ("gamma".into(), format!("{:e}", self.gamma.as_f64())),
            ("batch".into(), self.batch.to_string()),
            ("regime".into(), self.regime.to_string()),
            ("gradient_mode".into(), self.gradient_mode.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("record_every".into(), self.record_every.to_string()),
            ("x0_norm_sq".into(), format!("{:e}", self.x0.norm_sq().as_f64())),
        ];
        if self.x0.norm_sq() == S::zero() {
            kv.push(("x0".into(), "zeros".into()));
        }
        if self.fault != FaultInjection::None {
            kv.push(("fault".into(), format!("{:?}", self.fault)));
        }
        kv
    }
}
