use crate::numkit::{DenseVector, NumError, RngStream};
use crate::objective::{Batch, Objective, ReferenceSolution};
use crate::scalar::Scalar;
use crate::simulator::{FaultInjection, RunConfig, SimError, Trace, TraceRecord};

const DIVERGENCE_NORM: f64 = 1e100;

/// `V = (1/M) Σ_m ‖x^m − x̂‖²`.
pub fn compute_vt<S: Scalar>(iterates: &[DenseVector<S>]) -> Result<S, NumError> {
    let mean = crate::numkit::mean(iterates)?;
    let rows: Vec<&[S]> = iterates.iter().map(|v| v.as_slice()).collect();
    Ok(spread(&rows, mean.as_slice()))
}

fn spread<S: Scalar, R: AsRef<[S]>>(rows: &[R], mean: &[S]) -> S {
    let mut acc = S::zero();
    for r in rows {
        for (a, b) in r.as_ref().iter().zip(mean) {
            let d = *a - *b;
            acc += d * d;
        }
    }
    acc / S::of_usize(rows.len())
}

/// `v₀ + (1/M) Σ_m (v_m − v₀)`, exact when all rows are equal.
fn shifted_mean_into<S: Scalar>(rows: &[Vec<S>], out: &mut [S]) {
    let inv = S::one() / S::of_usize(rows.len());
    let base = &rows[0];
    out.iter_mut().for_each(|o| *o = S::zero());
    for r in &rows[1..] {
        for ((o, a), b) in out.iter_mut().zip(r).zip(base) {
            *o += *a - *b;
        }
    }
    for (o, b) in out.iter_mut().zip(base) {
        *o = *b + *o * inv;
    }
}

fn check_consistency<S: Scalar, O: Objective<S> + ?Sized>(
    obj: &O,
    cfg: &RunConfig<S>,
    reference: &ReferenceSolution<S>,
) -> Result<(), SimError> {
    cfg.validate()?;
    if cfg.nodes != obj.num_nodes() {
        return Err(SimError::Config(format!("config has {} nodes, problem has {}", cfg.nodes, obj.num_nodes())));
    }
    if cfg.regime != obj.regime() {
        return Err(SimError::Config(format!("config regime {} differs from problem regime {}", cfg.regime, obj.regime())));
    }
    if cfg.x0.dim() != obj.dim() || reference.x_star.dim() != obj.dim() {
        return Err(NumError::DimensionMismatch { left: obj.dim(), right: cfg.x0.dim().max(reference.x_star.dim()) }.into());
    }
    Ok(())
}

/// Step-by-step Local SGD state. `run_local_sgd` drives this; it is public so
/// callers can inspect node iterates between steps.
pub struct LocalSgd<'a, S, O: ?Sized> {
    obj: &'a O,
    cfg: &'a RunConfig<S>,
    iterates: Vec<Vec<S>>,
    grads: Vec<Vec<S>>,
    mean_grad: Vec<S>,
    rngs: Vec<RngStream>,
    batch: Batch,
    t: usize,
}

impl<'a, S: Scalar, O: Objective<S> + ?Sized> LocalSgd<'a, S, O> {
    pub fn new(obj: &'a O, cfg: &'a RunConfig<S>) -> Result<Self, SimError> {
        cfg.validate()?;
        if cfg.nodes != obj.num_nodes() || cfg.x0.dim() != obj.dim() {
            return Err(SimError::Config("config does not match the problem".into()));
        }
        let d = obj.dim();
        Ok(Self {
            obj,
            cfg,
            iterates: vec![cfg.x0.as_slice().to_vec(); cfg.nodes],
            grads: vec![vec![S::zero(); d]; cfg.nodes],
            mean_grad: vec![S::zero(); d],
            rngs: (0..cfg.nodes as u64).map(|m| RngStream::new(cfg.seed, m)).collect(),
            batch: cfg.effective_batch(),
            t: 0,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn iterates(&self) -> &[Vec<S>] {
        &self.iterates
    }

    pub fn average(&self) -> DenseVector<S> {
        let mut out = vec![S::zero(); self.obj.dim()];
        shifted_mean_into(&self.iterates, &mut out);
        DenseVector::from_vec_unchecked(out)
    }

    pub fn v_t(&self) -> S {
        let mean = self.average();
        spread(&self.iterates, mean.as_slice())
    }

    /// `(1/M) Σ_m g^m` from the most recent step.
    pub fn last_mean_grad(&self) -> &[S] {
        &self.mean_grad
    }

    /// One local step on every node, then averaging if `t + 1` is a sync
    /// step. Returns `‖(1/M) Σ_m g_t^m‖²`.
    pub fn step(&mut self) -> Result<S, SimError> {
        let gamma = self.cfg.gamma;
        let m = self.cfg.nodes;
        let inv = S::one() / S::of_usize(m);
        self.mean_grad.iter_mut().for_each(|v| *v = S::zero());
        for node in 0..m {
            let g = &mut self.grads[node];
            self.obj.sample_grad_into(node, &self.iterates[node], &mut self.rngs[node], self.batch, g);
            let x = &mut self.iterates[node];
            for ((xi, gi), mg) in x.iter_mut().zip(g.iter()).zip(self.mean_grad.iter_mut()) {
                *xi -= gamma * *gi;
                *mg += *gi * inv;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SimError::Diverged { t: self.t + 1, node: Some(node), norm: f64::INFINITY });
            }
        }
        self.t += 1;
        if self.cfg.schedule.is_sync(self.t) && self.cfg.fault != FaultInjection::SkipAveraging {
            let mut avg = vec![S::zero(); self.obj.dim()];
            shifted_mean_into(&self.iterates, &mut avg);
            for x in &mut self.iterates {
                x.copy_from_slice(&avg);
            }
        }
        Ok(self.mean_grad.iter().map(|v| *v * *v).sum())
    }
}

struct Recorder<'a, S, O: ?Sized> {
    obj: &'a O,
    reference: &'a ReferenceSolution<S>,
    sum_from_one: Vec<S>,
    sum_from_zero: Vec<S>,
    records: Vec<TraceRecord<S>>,
}

impl<'a, S: Scalar, O: Objective<S> + ?Sized> Recorder<'a, S, O> {
    fn new(obj: &'a O, reference: &'a ReferenceSolution<S>) -> Self {
        let d = obj.dim();
        Self { obj, reference, sum_from_one: vec![S::zero(); d], sum_from_zero: vec![S::zero(); d], records: Vec::new() }
    }

    /// Accumulates `x̂_t`, guards against divergence, and records if asked.
    fn observe(
        &mut self,
        cfg: &RunConfig<S>,
        t: usize,
        xhat: &DenseVector<S>,
        v_t: impl FnOnce() -> S,
        round: usize,
    ) -> Result<Option<usize>, SimError> {
        let norm = xhat.norm();
        if !norm.is_finite() || norm.as_f64() > DIVERGENCE_NORM {
            return Err(SimError::Diverged { t, node: None, norm: norm.as_f64() });
        }
        if t < cfg.t {
            add(&mut self.sum_from_zero, xhat.as_slice());
        }
        if t >= 1 {
            add(&mut self.sum_from_one, xhat.as_slice());
        }
        if !cfg.should_record(t) {
            return Ok(None);
        }
        let dist_sq = xhat.dist_sq(&self.reference.x_star)?;
        let subopt = self.obj.global_loss(xhat.as_slice()) - self.reference.f_star;
        self.records.push(TraceRecord {
            t,
            synced: t == 0 || cfg.schedule.is_sync(t),
            round,
            v_t: v_t(),
            dist_sq,
            subopt,
            grad_sq: None,
            iterate: cfg.record_iterates.then(|| xhat.clone()),
        });
        Ok(Some(self.records.len() - 1))
    }

    fn finish(self, cfg: &RunConfig<S>, x_final: DenseVector<S>, comm_rounds: usize, engine: &str) -> Trace<S> {
        let inv = S::one() / S::of_usize(cfg.t);
        let avg = |s: Vec<S>| DenseVector::from_vec_unchecked(s.into_iter().map(|v| v * inv).collect());
        let bar_x = avg(self.sum_from_one);
        let bar_x_lagged = avg(self.sum_from_zero);
        let f_star = self.reference.f_star;
        let mut metadata = vec![("engine".to_string(), engine.to_string())];
        metadata.extend(cfg.echo());
        metadata.push(("L".into(), format!("{:e}", self.obj.smoothness().as_f64())));
        metadata.push(("L_component".into(), format!("{:e}", self.obj.component_smoothness().as_f64())));
        metadata.push(("mu".into(), format!("{:e}", self.obj.strong_convexity().as_f64())));
        metadata.push(("f_star".into(), format!("{:e}", f_star.as_f64())));
        let r0 = cfg.x0.dist_sq(&self.reference.x_star).unwrap_or(S::nan());
        metadata.push(("r0_sq".into(), format!("{:e}", r0.as_f64())));
        Trace {
            bar_x_subopt: self.obj.global_loss(bar_x.as_slice()) - f_star,
            bar_x_lagged_subopt: self.obj.global_loss(bar_x_lagged.as_slice()) - f_star,
            records: self.records,
            x_final,
            bar_x,
            bar_x_lagged,
            comm_rounds,
            metadata,
        }
    }
}

fn add<S: Scalar>(acc: &mut [S], x: &[S]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += *b;
    }
}

/// Local SGD: independent steps per node, averaging at the schedule's steps.
pub fn run_local_sgd<S: Scalar, O: Objective<S> + ?Sized>(
    obj: &O,
    cfg: &RunConfig<S>,
    reference: &ReferenceSolution<S>,
) -> Result<Trace<S>, SimError> {
    check_consistency(obj, cfg, reference)?;
    let mut engine = LocalSgd::new(obj, cfg)?;
    let mut rec = Recorder::new(obj, reference);
    for t in 0..=cfg.t {
        let xhat = engine.average();
        let slot = rec.observe(cfg, t, &xhat, || engine.v_t(), cfg.schedule.rounds_by(t))?;
        if t < cfg.t {
            let g = engine.step()?;
            if let Some(i) = slot {
                rec.records[i].grad_sq = Some(g);
            }
        }
    }
    let x_final = engine.average();
    Ok(rec.finish(cfg, x_final, cfg.schedule.comm_rounds(), "local_sgd"))
}

/// Minibatch SGD: one shared iterate stepped by the mean of the `M` node
/// gradients, with node `m` drawing from the same stream as in Local SGD.
pub fn run_minibatch_sgd<S: Scalar, O: Objective<S> + ?Sized>(
    obj: &O,
    cfg: &RunConfig<S>,
    reference: &ReferenceSolution<S>,
) -> Result<Trace<S>, SimError> {
    check_consistency(obj, cfg, reference)?;
    let d = obj.dim();
    let m = cfg.nodes;
    let inv = S::one() / S::of_usize(m);
    let batch = cfg.effective_batch();
    let mut rngs: Vec<RngStream> = (0..m as u64).map(|k| RngStream::new(cfg.seed, k)).collect();
    let mut x = cfg.x0.clone();
    let mut g = vec![S::zero(); d];
    let mut mean = vec![S::zero(); d];
    let mut rec = Recorder::new(obj, reference);
    for t in 0..=cfg.t {
        let slot = rec.observe(cfg, t, &x, S::zero, t)?;
        if t == cfg.t {
            break;
        }
        mean.iter_mut().for_each(|v| *v = S::zero());
        for (node, rng) in rngs.iter_mut().enumerate() {
            obj.sample_grad_into(node, x.as_slice(), rng, batch, &mut g);
            add(&mut mean, &g);
        }
        mean.iter_mut().for_each(|v| *v *= inv);
        if let Some(i) = slot {
            rec.records[i].grad_sq = Some(mean.iter().map(|v| *v * *v).sum());
        }
        for (xi, gi) in x.as_mut_slice().iter_mut().zip(&mean) {
            *xi -= cfg.gamma * *gi;
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(SimError::Diverged { t: t + 1, node: None, norm: x[j].as_f64() });
        }
    }
    Ok(rec.finish(cfg, x.clone(), cfg.t, "minibatch_sgd"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, partition, Regime, SyntheticSpec};
    use crate::objective::{solve_reference, ObjectiveExt, Problem, QuadraticComponent, QuadraticProblem, SolverOptions};
    use crate::simulator::{GradientMode, SyncSchedule};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn logistic(nodes: usize, regime: Regime) -> (Problem<f64>, ReferenceSolution<f64>) {
        let spec = SyntheticSpec { n: 200, dim: 5, seed: 2, sort_by_label: true, ..Default::default() };
        let ds = Arc::new(generate_synthetic::<f64>(&spec).unwrap());
        let p = Problem::new(ds, partition(200, nodes, regime).unwrap(), 1.0 / 200.0).unwrap();
        let r = solve_reference(&p, &SolverOptions::default()).unwrap();
        (p, r)
    }

    #[test]
    fn vt_examples() {
        let a = DenseVector::from_vec(vec![0.0]).unwrap();
        let b = DenseVector::from_vec(vec![2.0]).unwrap();
        assert_eq!(compute_vt(&[a.clone(), b.clone()]).unwrap(), 1.0);
        assert_eq!(compute_vt(&[b.clone(), b.clone(), b]).unwrap(), 0.0);
        assert!(compute_vt::<f64>(&[]).is_err());
    }

    proptest! {
        #[test]
        fn vt_translation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..6),
            shift in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let a: Vec<DenseVector<f64>> = rows.iter().map(|r| DenseVector::from_vec(r.clone()).unwrap()).collect();
            let b: Vec<DenseVector<f64>> = rows
                .iter()
                .map(|r| DenseVector::from_vec(r.iter().zip(&shift).map(|(x, s)| x + s).collect()).unwrap())
                .collect();
            let (va, vb) = (compute_vt(&a).unwrap(), compute_vt(&b).unwrap());
            prop_assert!(va >= 0.0);
            prop_assert!((va - vb).abs() <= 1e-9 * (1.0 + va));
        }
    }

    #[test]
    fn noise_free_identical_run_is_gd() {
        let (p, r) = logistic(3, Regime::Identical);
        let sched = SyncSchedule::uniform(7, 50).unwrap();
        let gamma = 1.0 / p.smoothness();
        let cfg = RunConfig::new(3, Regime::Identical, sched, gamma, DenseVector::zeros(5))
            .with_mode(GradientMode::Full)
            .with_record_every(1);
        let tr = run_local_sgd(&p, &cfg, &r).unwrap();
        let mut x = DenseVector::zeros(5);
        for rec in &tr.records {
            assert_eq!(rec.v_t, 0.0);
            assert!(rec.dist_sq == x.dist_sq(&r.x_star).unwrap());
            let g = p.full_grad_global(&x).unwrap();
            x.add_scaled(-gamma, &g).unwrap();
        }
    }

    #[test]
    fn average_iterate_identity() {
        let (p, _) = logistic(4, Regime::Heterogeneous);
        let sched = SyncSchedule::uniform(5, 40).unwrap();
        let cfg = RunConfig::new(4, Regime::Heterogeneous, sched, 0.3, DenseVector::zeros(5));
        let mut e = LocalSgd::new(&p, &cfg).unwrap();
        for _ in 0..40 {
            let before = e.average();
            e.step().unwrap();
            let after = e.average();
            let g = e.last_mean_grad().to_vec();
            for j in 0..5 {
                let want = before[j] - 0.3 * g[j];
                assert!((after[j] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn sync_steps_zero_spread_and_rounds() {
        let (p, r) = logistic(4, Regime::Heterogeneous);
        let sched = SyncSchedule::explicit(vec![3, 4, 10, 17, 20], 20, 7).unwrap();
        let cfg = RunConfig::new(4, Regime::Heterogeneous, sched, 0.5, DenseVector::zeros(5)).with_record_every(1);
        let tr = run_local_sgd(&p, &cfg, &r).unwrap();
        assert_eq!(tr.records.len(), 21);
        for rec in &tr.records {
            if rec.synced {
                assert_eq!(rec.v_t, 0.0, "t={}", rec.t);
            }
        }
        assert!(tr.records.iter().any(|r| r.v_t > 0.0));
        assert_eq!(tr.comm_rounds, 5);
        assert_eq!(tr.records[10].round, 3);
        assert!(tr.last().grad_sq.is_none() && tr.records[0].grad_sq.is_some());
    }

    #[test]
    fn h1_matches_minibatch() {
        let (p, r) = logistic(4, Regime::Heterogeneous);
        let mut cfg = RunConfig::new(4, Regime::Heterogeneous, SyncSchedule::uniform(1, 60).unwrap(), 0.5, DenseVector::zeros(5))
            .with_seed(11)
            .with_batch(Batch::Sampled(3));
        cfg.record_iterates = true;
        let a = run_local_sgd(&p, &cfg, &r).unwrap();
        let b = run_minibatch_sgd(&p, &cfg, &r).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            let (x, y) = (x.iterate.as_ref().unwrap(), y.iterate.as_ref().unwrap());
            assert!(x.dist_sq(y).unwrap().sqrt() <= 1e-12 * y.norm().max(1e-300));
        }
    }

    #[test]
    fn single_node_is_serial_sgd() {
        let (p, r) = logistic(1, Regime::Heterogeneous);
        let mut cfg = RunConfig::new(1, Regime::Heterogeneous, SyncSchedule::uniform(9, 45).unwrap(), 0.5, DenseVector::zeros(5));
        cfg.record_iterates = true;
        let a = run_local_sgd(&p, &cfg, &r).unwrap();
        let b = run_minibatch_sgd(&p, &cfg, &r).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.iterate, y.iterate);
        }
    }

    #[test]
    fn zero_step_stays_put_and_schedules_are_equivalent() {
        let (p, r) = logistic(2, Regime::Identical);
        let x0 = DenseVector::from_vec(vec![0.1, -0.2, 0.3, 0.0, 1.0]).unwrap();
        let cfg = RunConfig::new(2, Regime::Identical, SyncSchedule::uniform(1, 10).unwrap(), 0.0, x0.clone());
        let tr = run_minibatch_sgd(&p, &cfg, &r).unwrap();
        assert_eq!(tr.x_final, x0);

        let a = SyncSchedule::explicit(vec![4, 8, 12], 12, 4).unwrap();
        let b = SyncSchedule::explicit(vec![4, 8, 12], 12, 9).unwrap();
        let ca = RunConfig::new(2, Regime::Identical, a, 0.2, x0.clone()).with_record_every(1);
        let cb = RunConfig { schedule: b, ..ca.clone() };
        assert_eq!(run_local_sgd(&p, &ca, &r).unwrap().records, run_local_sgd(&p, &cb, &r).unwrap().records);
    }

    #[test]
    fn divergence_is_reported() {
        let q = QuadraticProblem::identical(vec![QuadraticComponent::isotropic(vec![1.0, 1.0])], 2, 0.0).unwrap();
        let (x, f) = q.optimum();
        let reference = ReferenceSolution::exact(x, f);
        let cfg = RunConfig::new(2, Regime::Identical, SyncSchedule::uniform(2, 2000).unwrap(), 5.0, DenseVector::zeros(2))
            .with_mode(GradientMode::Full);
        match run_local_sgd(&q, &cfg, &reference) {
            Err(SimError::Diverged { t, .. }) => assert!(t > 0 && t < 2000),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_mismatch() {
        let (p, r) = logistic(2, Regime::Identical);
        let cfg = RunConfig::new(3, Regime::Identical, SyncSchedule::uniform(1, 5).unwrap(), 0.1, DenseVector::zeros(5));
        assert!(matches!(run_local_sgd(&p, &cfg, &r), Err(SimError::Config(_))));
        let cfg = RunConfig::new(2, Regime::Heterogeneous, SyncSchedule::uniform(1, 5).unwrap(), 0.1, DenseVector::zeros(5));
        assert!(run_local_sgd(&p, &cfg, &r).is_err());
        let cfg = RunConfig::new(2, Regime::Identical, SyncSchedule::uniform(1, 5).unwrap(), 0.1, DenseVector::zeros(4));
        assert!(run_local_sgd(&p, &cfg, &r).is_err());
    }

    #[test]
    fn skipped_averaging_leaves_spread() {
        let (p, r) = logistic(4, Regime::Heterogeneous);
        let mut cfg = RunConfig::new(4, Regime::Heterogeneous, SyncSchedule::uniform(2, 20).unwrap(), 0.5, DenseVector::zeros(5));
        cfg.fault = FaultInjection::SkipAveraging;
        let tr = run_local_sgd(&p, &cfg, &r).unwrap();
        assert!(tr.records.iter().any(|r| r.synced && r.v_t > 0.0));
    }
}
