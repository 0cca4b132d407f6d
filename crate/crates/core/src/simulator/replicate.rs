use std::fmt::Write as _;

use rayon::prelude::*;

use crate::objective::{Objective, ReferenceSolution};
use crate::scalar::Scalar;
use crate::simulator::{run_local_sgd, RunConfig, SimError, Trace};

/// Sample mean and standard error (`s/√n`, `n − 1` denominator).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let Some(&v0) = values.first() else {
            return Self { mean: f64::NAN, se: f64::NAN };
        };
        // shifted so that equal samples give an exact mean and zero spread
        let mean = v0 + values.iter().map(|v| v - v0).sum::<f64>() / n;
        if values.len() < 2 {
            return Self { mean, se: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Self { mean, se: (var / n).sqrt() }
    }
}

/// Per-step statistics over seeds on a shared recording grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateTrace {
    pub seeds: Vec<u64>,
    pub steps: Vec<usize>,
    pub synced: Vec<bool>,
    pub rounds: Vec<usize>,
    pub v_t: Vec<MeanSe>,
    pub dist_sq: Vec<MeanSe>,
    pub subopt: Vec<MeanSe>,
    pub grad_sq: Vec<Option<MeanSe>>,
    pub bar_x_subopt: MeanSe,
    pub bar_x_lagged_subopt: MeanSe,
    pub comm_rounds: usize,
    /// Metadata of the first seed's trace, with its `seed` entry replaced by
    /// the seed list.
    pub metadata: Vec<(String, String)>,
}

impl AggregateTrace {
    pub fn from_traces<S: Scalar>(traces: &[Trace<S>], seeds: &[u64]) -> Result<Self, SimError> {
        let Some(first) = traces.first() else {
            return Err(SimError::Mismatch("no traces to aggregate".into()));
        };
        let steps = first.steps();
        for (i, tr) in traces.iter().enumerate() {
            if tr.steps() != steps {
                return Err(SimError::Mismatch(format!("trace {i} uses a different recording grid")));
            }
        }
        let col = |f: &dyn Fn(&crate::simulator::TraceRecord<S>) -> S, k: usize| -> MeanSe {
            let v: Vec<f64> = traces.iter().map(|t| f(&t.records[k]).as_f64()).collect();
            MeanSe::of(&v)
        };
        let n = steps.len();
        let scalar = |f: &dyn Fn(&Trace<S>) -> S| -> MeanSe {
            MeanSe::of(&traces.iter().map(|t| f(t).as_f64()).collect::<Vec<_>>())
        };
        let mut metadata: Vec<(String, String)> =
            first.metadata.iter().filter(|(k, _)| k != "seed").cloned().collect();
        let list: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
        metadata.push(("seeds".into(), list.join(",")));
        Ok(Self {
            seeds: seeds.to_vec(),
            synced: first.records.iter().map(|r| r.synced).collect(),
            rounds: first.records.iter().map(|r| r.round).collect(),
            v_t: (0..n).map(|k| col(&|r| r.v_t, k)).collect(),
            dist_sq: (0..n).map(|k| col(&|r| r.dist_sq, k)).collect(),
            subopt: (0..n).map(|k| col(&|r| r.subopt, k)).collect(),
            grad_sq: (0..n)
                .map(|k| {
                    let v: Option<Vec<f64>> = traces.iter().map(|t| t.records[k].grad_sq.map(|g| g.as_f64())).collect();
                    v.map(|v| MeanSe::of(&v))
                })
                .collect(),
            bar_x_subopt: scalar(&|t| t.bar_x_subopt),
            bar_x_lagged_subopt: scalar(&|t| t.bar_x_lagged_subopt),
            comm_rounds: first.comm_rounds,
            steps,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Header block plus one row per recorded step.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "# bar_x_subopt_mean={:e}", self.bar_x_subopt.mean);
        let _ = writeln!(out, "# bar_x_subopt_se={:e}", self.bar_x_subopt.se);
        let _ = writeln!(out, "# bar_x_lagged_subopt_mean={:e}", self.bar_x_lagged_subopt.mean);
        let _ = writeln!(out, "# bar_x_lagged_subopt_se={:e}", self.bar_x_lagged_subopt.se);
        out.push_str("t,round,synced,V_t_mean,V_t_se,dist_sq_mean,dist_sq_se,subopt_mean,subopt_se\n");
        for k in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                self.steps[k],
                self.rounds[k],
                u8::from(self.synced[k]),
                self.v_t[k].mean,
                self.v_t[k].se,
                self.dist_sq[k].mean,
                self.dist_sq[k].se,
                self.subopt[k].mean,
                self.subopt[k].se
            );
        }
        out
    }
}

/// Runs Local SGD once per seed, concurrently, in seed-list order.
pub fn run_replicated_traces<S: Scalar, O: Objective<S> + ?Sized>(
    obj: &O,
    cfg: &RunConfig<S>,
    reference: &ReferenceSolution<S>,
    seeds: &[u64],
) -> Result<Vec<Trace<S>>, SimError> {
    if seeds.len() < 2 {
        return Err(SimError::Config("replication needs at least two seeds".into()));
    }
    seeds
        .par_iter()
        .map(|&seed| {
            let c = RunConfig { seed, ..cfg.clone() };
            run_local_sgd(obj, &c, reference)
        })
        .collect()
}

pub fn run_replicated<S: Scalar, O: Objective<S> + ?Sized>(
    obj: &O,
    cfg: &RunConfig<S>,
    reference: &ReferenceSolution<S>,
    seeds: &[u64],
) -> Result<AggregateTrace, SimError> {
    let traces = run_replicated_traces(obj, cfg, reference, seeds)?;
    AggregateTrace::from_traces(&traces, seeds)
}
