//! The acceptance suite: eleven self-contained checks, each with its own
//! tolerance and runtime budget. `verify` runs them in order and fails on any
//! failure; a criterion that needs absent real data is skipped with a
//! warning.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use localsgd::dataio::{generate_synthetic, Dataset, Regime, SyntheticSpec};
use localsgd::numkit::{DenseVector, RngStream};
use localsgd::objective::{
    measure_variances, variance_report_from_views, Batch, Objective, ObjectiveExt, QuadraticComponent,
    QuadraticProblem, ReferenceSolution,
};
use localsgd::simulator::{
    run_local_sgd, run_minibatch_sgd, run_replicated, AggregateTrace, FaultInjection, GradientMode, MeanSe, RunConfig,
    SyncSchedule,
};
use localsgd::theory::{
    check_bound, check_deviation_bound, plan_gamma, plan_h, stepsize_limit, BoundCurve, BoundInputs, GammaRule, HRule,
    TheoremId, TheoryError,
};
use rayon::prelude::*;
use serde_json::json;

use crate::data::{build_problem, load_optional, reference_for};
use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    /// 50 seeds per Monte-Carlo criterion.
    Fast,
    /// 200 seeds per Monte-Carlo criterion.
    Full,
}

impl Level {
    pub fn seeds(self) -> Vec<u64> {
        match self {
            Level::Fast => (0..50).collect(),
            Level::Full => (0..200).collect(),
        }
    }
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(format!("unknown level {other:?} (fast or full)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl CriterionResult {
    /// One line: status, id, name, time against budget, detail.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2}. {} ({:.2}s of {}s): {}",
            self.status,
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.detail
        )
    }
}

/// Id, name and runtime budget in seconds.
pub const CRITERIA: [(u8, &str, u64); 11] = [
    (1, "gradient correctness", 1),
    (2, "H=1 matches minibatch SGD", 5),
    (3, "V_t is zero at every sync step", 10),
    (4, "deviation bound on identical data", 120),
    (5, "strongly convex identical-data bound", 180),
    (6, "finite-sum bounds (strongly convex and convex)", 300),
    (7, "heterogeneous bound and interpolation", 300),
    (8, "variance identities", 60),
    (9, "planner arithmetic", 1),
    (10, "a9a protocol reproduction", 600),
    (11, "local GD rounds-to-target trade-off", 120),
];

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

#[derive(Clone, Debug)]
pub struct Suite {
    pub level: Level,
    /// Where `MANIFEST` and real datasets live.
    pub data_dir: PathBuf,
    /// Test hook: tamper with the engine to confirm the suite notices.
    pub fault: FaultInjection,
}

impl Suite {
    pub fn new(level: Level, data_dir: PathBuf) -> Self {
        Self { level, data_dir, fault: FaultInjection::None }
    }

    pub fn run_all(&self) -> Vec<CriterionResult> {
        CRITERIA.iter().map(|c| self.run(c.0)).collect()
    }

    /// Runs one criterion. Errors and budget overruns count as failures.
    pub fn run(&self, id: u8) -> CriterionResult {
        let &(_, name, budget) = CRITERIA.iter().find(|c| c.0 == id).expect("criterion ids are 1..=11");
        let start = Instant::now();
        let outcome = match id {
            1 => self.gradients(),
            2 => self.minibatch_equivalence(),
            3 => self.sync_invariant(),
            4 => self.deviation_bound(),
            5 => self.sc_identical_bound(),
            6 => self.finite_sum_bounds(),
            7 => self.heterogeneous_bound(),
            8 => self.variance_identities(),
            9 => self.planner_arithmetic(),
            10 => self.protocol_reproduction(),
            11 => self.local_gd_tradeoff(),
            _ => unreachable!(),
        };
        let elapsed = start.elapsed();
        let budget = Duration::from_secs(budget);
        let (mut status, mut detail) = match outcome {
            Ok(Outcome::Pass(d)) => (Status::Pass, d),
            Ok(Outcome::Fail(d)) => (Status::Fail, d),
            Ok(Outcome::Skip(d)) => (Status::Skip, d),
            Err(e) => (Status::Fail, format!("error: {e}")),
        };
        if status == Status::Pass && elapsed > budget {
            status = Status::Fail;
            detail = format!("over the runtime budget; {detail}");
        }
        CriterionResult { id, name, status, detail, elapsed, budget }
    }

    fn prep<S: localsgd::Scalar>(&self, mut cfg: RunConfig<S>) -> RunConfig<S> {
        cfg.fault = self.fault;
        cfg
    }

    // 1
    fn gradients(&self) -> CliResult<Outcome> {
        let ds = synthetic(SyntheticSpec { n: 400, dim: 20, seed: 11, density: 0.5, ..Default::default() })?;
        let p = build_problem(&ds, 4, Regime::Heterogeneous, None)?;
        let d = p.dim();
        let mut rng = RngStream::new(0xC1, 0);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| 4.0 * rng.next_unit() - 2.0).collect();
            let node = rng.draw_index(4).expect("nonempty");
            let k = rng.draw_index(p.num_components(node)).expect("nonempty");
            let mut g = vec![0.0; d];
            p.add_component_grad(node, k, &x, 1.0, &mut g);
            let mut xp = x.clone();
            let mut err = 0.0;
            for j in 0..d {
                let h = 1e-5 * x[j].abs().max(1.0);
                xp[j] = x[j] + h;
                let fp = p.component_loss(node, k, &xp);
                xp[j] = x[j] - h;
                let fm = p.component_loss(node, k, &xp);
                xp[j] = x[j];
                let fd = (fp - fm) / (2.0 * h);
                err += (g[j] - fd) * (g[j] - fd);
            }
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(err.sqrt() / norm.max(f64::MIN_POSITIVE));
        }
        Ok(verdict(worst <= 1e-6, format!("worst relative error {worst:.2e} over 100 points (tol 1e-6)")))
    }

    // 2
    fn minibatch_equivalence(&self) -> CliResult<Outcome> {
        let ds = synthetic(SyntheticSpec { n: 1000, dim: 20, seed: 2, ..Default::default() })?;
        let mut worst = 0.0f64;
        let mut compared = 0usize;
        for regime in [Regime::Identical, Regime::Heterogeneous] {
            let p = build_problem(&ds, 4, regime, None)?;
            let r = reference_for(&p)?;
            let mut cfg = RunConfig::new(4, regime, SyncSchedule::uniform(1, 500)?, 0.5 / p.smoothness(), DenseVector::zeros(p.dim()))
                .with_record_every(1);
            cfg.record_iterates = true;
            let cfg = self.prep(cfg);
            for seed in [0u64, 1, 2] {
                let c = RunConfig { seed, ..cfg.clone() };
                let a = run_local_sgd(&p, &c, &r)?;
                let b = run_minibatch_sgd(&p, &c, &r)?;
                for (ra, rb) in a.records.iter().zip(&b.records) {
                    let (xa, xb) = (ra.iterate.as_ref().expect("recorded"), rb.iterate.as_ref().expect("recorded"));
                    let diff = xa.dist_sq(xb).map_err(|e| CliError::Failed(e.to_string()))?.sqrt();
                    worst = worst.max(diff / xb.norm().max(f64::MIN_POSITIVE));
                    compared += 1;
                }
            }
        }
        Ok(verdict(
            worst <= 1e-12 && compared == 2 * 3 * 501,
            format!("max per-step relative iterate gap {worst:.2e} over {compared} steps (tol 1e-12)"),
        ))
    }

    // 3
    fn sync_invariant(&self) -> CliResult<Outcome> {
        let ds = synthetic(SyntheticSpec { n: 240, dim: 8, seed: 3, ..Default::default() })?;
        // problems for M = 1..=6 in both regimes
        let mut problems = Vec::new();
        for m in 1..=6 {
            for regime in [Regime::Identical, Regime::Heterogeneous] {
                let p = build_problem(&ds, m, regime, None)?;
                let r = reference_for(&p)?;
                problems.push((p, r));
            }
        }
        let results: Vec<CliResult<(usize, usize)>> = (0..100u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::new(0xC3, i);
                let draw = |rng: &mut RngStream, n: usize| rng.draw_index(n).expect("nonempty");
                let t = 10 + draw(&mut rng, 391);
                let extra = draw(&mut rng, t.min(40));
                let mut steps: Vec<usize> = (0..extra).map(|_| 1 + draw(&mut rng, t - 1)).collect();
                steps.push(t);
                steps.sort_unstable();
                steps.dedup();
                let m = 1 + draw(&mut rng, 6);
                let het = draw(&mut rng, 2) == 1;
                let batch = if draw(&mut rng, 2) == 0 { Batch::Sampled(1) } else { Batch::Sampled(4) };
                let (p, r) = &problems[(m - 1) * 2 + usize::from(het)];
                let schedule = SyncSchedule::from_steps(steps.clone(), t)?;
                let cfg = RunConfig::new(m, p.partition().regime(), schedule, 0.5 / p.smoothness(), DenseVector::zeros(p.dim()))
                    .with_batch(batch)
                    .with_seed(i)
                    .with_record_every(t + 1);
                let tr = run_local_sgd(p, &self.prep(cfg), r)?;
                let synced: Vec<_> = tr.records.iter().filter(|rec| rec.synced).collect();
                let bad = synced.iter().filter(|rec| rec.v_t != 0.0).count();
                let missing = (steps.len() + 1).abs_diff(synced.len());
                Ok((synced.len(), bad + missing))
            })
            .collect();
        let mut checked = 0;
        let mut bad = 0;
        for r in results {
            let (c, b) = r?;
            checked += c;
            bad += b;
        }
        Ok(verdict(bad == 0, format!("{checked} sync records over 100 random schedules, {bad} nonzero or missing")))
    }

    // 4
    fn deviation_bound(&self) -> CliResult<Outcome> {
        let q = noisy_quadratic(4)?;
        let (x, f) = q.optimum();
        let r = ReferenceSolution::exact(x, f);
        let l = q.smoothness();
        let gamma = 1.0 / (2.0 * l);
        let seeds = self.level.seeds();
        let mut ok = true;
        let mut parts = Vec::new();
        for h in [2usize, 8, 32] {
            let cfg = RunConfig::new(4, Regime::Identical, SyncSchedule::uniform(h, 256)?, gamma, DenseVector::zeros(q.dim()))
                .with_record_every(1);
            let agg = run_replicated(&q, &self.prep(cfg), &r, &seeds)?;
            let v = check_deviation_bound(&agg, l, gamma, h, q.noise_sq(), false)?;
            ok &= v.holds;
            parts.push(format!("H={h}: {} (mean/bound max {:.3})", if v.holds { "holds" } else { "violated" }, v.slack_ratio));
        }
        Ok(verdict(ok, format!("{} seeds; {}", seeds.len(), parts.join("; "))))
    }

    // 5
    fn sc_identical_bound(&self) -> CliResult<Outcome> {
        let q = noisy_quadratic(4)?;
        let (x, f) = q.optimum();
        let r0_sq = x.norm_sq();
        let r = ReferenceSolution::exact(x, f);
        let l = q.smoothness();
        let mu = q.strong_convexity();
        let gamma = 1.0 / (4.0 * l);
        let seeds = self.level.seeds();
        let mut ok = true;
        let mut parts = Vec::new();
        for h in [1usize, 4, 16] {
            let schedule = SyncSchedule::uniform(h, 5000)?;
            let cfg = RunConfig::new(4, Regime::Identical, schedule, gamma, DenseVector::zeros(q.dim()));
            let agg = run_replicated(&q, &self.prep(cfg), &r, &seeds)?;
            let inputs = BoundInputs {
                l,
                mu: Some(mu),
                gamma,
                t: 5000,
                h,
                m: 4,
                sigma_sq: Some(q.noise_sq()),
                r0_sq,
                ..Default::default()
            };
            let v = check_bound(&BoundCurve::new(TheoremId::ScIidUbv, inputs)?, &agg)?;
            ok &= v.holds;
            parts.push(format!("H={h}: {} at {} steps (slack {:.3})", if v.holds { "holds" } else { "violated" }, v.compared_steps, v.slack_ratio));
        }
        Ok(verdict(ok, format!("mu={mu}, {} seeds; {}", seeds.len(), parts.join("; "))))
    }

    // 6
    fn finite_sum_bounds(&self) -> CliResult<Outcome> {
        let ds = synthetic(SyntheticSpec { n: 100, dim: 10, seed: 6, ..Default::default() })?;
        let p = build_problem(&ds, 4, Regime::Identical, None)?;
        let r = reference_for(&p)?;
        let rep = measure_variances(&p, &r, Batch::Sampled(1), &[])?;
        let lc = p.component_smoothness();
        let mu = p.mu();
        let r0_sq = r.x_star.norm_sq();
        let t = 20_000;
        let seeds = self.level.seeds();
        let mut ok = true;
        let mut parts = Vec::new();
        for h in [1usize, 4] {
            let plan = plan_gamma(GammaRule::ScFiniteSum { t_param: h as f64 }, lc, Some(mu), 4, t, h)?;
            let schedule = SyncSchedule::uniform(h, t)?;
            let mut cfg = RunConfig::new(4, Regime::Identical, schedule.clone(), plan.gamma, DenseVector::zeros(p.dim()))
                .with_record_every(10 * h);
            cfg.record_syncs = false;
            let agg = run_replicated(&p, &self.prep(cfg), &r, &seeds)?;
            let inputs = BoundInputs {
                l: lc,
                mu: Some(mu),
                gamma: plan.gamma,
                t,
                h,
                m: 4,
                sigma_opt_sq: Some(rep.sigma_opt_sq),
                r0_sq,
                ..Default::default()
            };
            let curve = BoundCurve::new(TheoremId::ScIidFs, inputs)?.at_sync_steps(schedule.sync_steps());
            let v = check_bound(&curve, &agg)?;
            ok &= v.holds;
            parts.push(format!("SC H={h}: {} at {} sync steps (slack {:.3})", if v.holds { "holds" } else { "violated" }, v.compared_steps, v.slack_ratio));
        }
        for h in [4usize, 16] {
            let plan = plan_gamma(GammaRule::WcFiniteSum, lc, None, 4, t, h)?;
            let cfg = RunConfig::new(4, Regime::Identical, SyncSchedule::uniform(h, t)?, plan.gamma, DenseVector::zeros(p.dim()))
                .with_record_every(t);
            let mut cfg = cfg;
            cfg.record_syncs = false;
            let agg = run_replicated(&p, &self.prep(cfg), &r, &seeds)?;
            let inputs = BoundInputs {
                l: lc,
                gamma: plan.gamma,
                t,
                h,
                m: 4,
                sigma_opt_sq: Some(rep.sigma_opt_sq),
                r0_sq,
                ..Default::default()
            };
            let v = check_bound(&BoundCurve::new(TheoremId::WcIidFs, inputs)?, &agg)?;
            ok &= v.holds;
            parts.push(format!("WC H={h}: {} (slack {:.3})", if v.holds { "holds" } else { "violated" }, v.slack_ratio));
        }
        Ok(verdict(ok, format!("sigma_opt^2={:.3e}, {} seeds; {}", rep.sigma_opt_sq, seeds.len(), parts.join("; "))))
    }

    // 7
    fn heterogeneous_bound(&self) -> CliResult<Outcome> {
        let ds = synthetic(SyntheticSpec { n: 400, dim: 10, seed: 7, sort_by_label: true, ..Default::default() })?;
        let p = build_problem(&ds, 4, Regime::Heterogeneous, None)?;
        let r = reference_for(&p)?;
        let rep = measure_variances(&p, &r, Batch::Sampled(1), &[])?;
        let lc = p.component_smoothness();
        let t = 20_000;
        let h = plan_h(HRule::WcHeterogeneous, t, 4, None)?;
        let plan = plan_gamma(GammaRule::WcHeterogeneous, lc, None, 4, t, h)?;
        let mut cfg = RunConfig::new(4, Regime::Heterogeneous, SyncSchedule::uniform(h, t)?, plan.gamma, DenseVector::zeros(p.dim()))
            .with_record_every(t / 10);
        cfg.record_syncs = false;
        let seeds = self.level.seeds();
        let agg = run_replicated(&p, &self.prep(cfg), &r, &seeds)?;
        let inputs = BoundInputs {
            l: lc,
            gamma: plan.gamma,
            t,
            h,
            m: 4,
            sigma_dif_sq: Some(rep.sigma_dif_sq),
            r0_sq: r.x_star.norm_sq(),
            ..Default::default()
        };
        let v = check_bound(&BoundCurve::new(TheoremId::WcHetFs, inputs)?, &agg)?;
        let heterogeneous = rep.sigma_dif_sq > 0.0;

        // interpolation: every component minimized at the same point
        let (ok_interp, interp) = self.interpolation(&seeds)?;
        Ok(verdict(
            v.holds && heterogeneous && ok_interp,
            format!(
                "sigma_dif^2={:.3e} > 0: {heterogeneous} (sigma_opt^2={:.3e}); H={h}, gamma={:.3e}: {} (slack {:.3}); {interp}",
                rep.sigma_dif_sq,
                rep.sigma_opt_sq,
                plan.gamma,
                if v.holds { "holds" } else { "violated" },
                v.slack_ratio
            ),
        ))
    }

    fn interpolation(&self, seeds: &[u64]) -> CliResult<(bool, String)> {
        let d = 6;
        let center: Vec<f64> = (0..d).map(|j| 1.0 - 0.3 * j as f64).collect();
        let mut rng = RngStream::new(0xC7, 1);
        let nodes: Vec<Vec<QuadraticComponent<f64>>> = (0..4)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        let curv: Vec<f64> = (0..d).map(|_| 0.2 + 0.8 * rng.next_unit()).collect();
                        QuadraticComponent::new(curv, center.clone())
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let q = QuadraticProblem::heterogeneous(nodes, 0.0)?;
        let (x, f) = q.optimum();
        let rep = variance_report_from_views(&q, &q, &q, &x, Batch::Sampled(1), &[])?;
        let r0_sq = x.norm_sq();
        let r = ReferenceSolution::exact(x, f);
        let t = 2000;
        let l = q.smoothness();
        let gamma = stepsize_limit(TheoremId::WcHetFs, l, 0.0, t, 4);
        let mut cfg = RunConfig::new(4, Regime::Heterogeneous, SyncSchedule::one_shot(t)?, gamma, DenseVector::zeros(d))
            .with_record_every(t);
        cfg.record_syncs = false;
        let agg = run_replicated(&q, &self.prep(cfg), &r, seeds)?;
        let target = 4.0 * r0_sq / (gamma * t as f64);
        let got = agg.bar_x_lagged_subopt.mean;
        let start = agg.subopt[0].mean;
        let end = agg.subopt[agg.len() - 1].mean;
        let ok = rep.sigma_dif_sq <= 1e-24 && got <= 1.01 * target && end < start;
        Ok((
            ok,
            format!(
                "interpolation one-shot (sigma_dif^2={:.1e}): mean f(x_bar)-f*={got:.3e} vs 4r0^2/(gamma T)*1.01={:.3e}, f(x_T)-f* {start:.3e} -> {end:.3e}",
                rep.sigma_dif_sq,
                1.01 * target
            ),
        ))
    }

    // 8
    fn variance_identities(&self) -> CliResult<Outcome> {
        let ds = synthetic(SyntheticSpec { n: 1000, dim: 20, seed: 8, sort_by_label: true, ..Default::default() })?;
        let base = build_problem(&ds, 1, Regime::Identical, None)?;
        let r = reference_for(&base)?;
        let mut worst_m1 = 0.0f64;
        for b in [Batch::Sampled(1), Batch::Sampled(4), Batch::Full] {
            let rep = measure_variances(&base, &r, b, &[])?;
            worst_m1 = worst_m1.max((rep.sigma_dif_sq - rep.sigma_opt_sq).abs() / rep.sigma_opt_sq.abs().max(f64::MIN_POSITIVE));
        }
        let mut worst_full = 0.0f64;
        let mut above = true;
        for m in [2usize, 4, 20] {
            let het = base.repartition(m, Regime::Heterogeneous)?;
            let rep = measure_variances(&het, &r, Batch::Full, &[])?;
            let mut oracle = 0.0;
            for node in 0..m {
                oracle += het.full_grad(node, &r.x_star)?.norm_sq();
            }
            oracle /= m as f64;
            worst_full = worst_full.max((rep.sigma_dif_sq - oracle).abs() / oracle.max(f64::MIN_POSITIVE));
            let sampled = measure_variances(&het, &r, Batch::Sampled(4), &[])?;
            above &= sampled.sigma_dif_sq > sampled.sigma_opt_sq;
        }
        Ok(verdict(
            worst_m1 <= 1e-12 && worst_full <= 1e-10,
            format!(
                "M=1 relative gap {worst_m1:.1e} (tol 1e-12); full-batch sigma_dif^2 vs mean node gradient norm {worst_full:.1e} (tol 1e-10); batch-4 sigma_dif^2 > sigma_opt^2 for M in 2,4,20: {above}"
            ),
        ))
    }

    // 9
    fn planner_arithmetic(&self) -> CliResult<Outcome> {
        let mut failures = Vec::new();
        let h = plan_h(HRule::WcHeterogeneous, 256, 4, None)?;
        if h != 2 {
            failures.push(format!("plan_h(wc-het, 256, 4) = {h}"));
        }
        for (t, m, kappa) in [(1usize, 1usize, 1.0f64), (40, 4, 10.0), (39, 4, 10.0), (100, 10, 10.0), (5, 20, 1.0), (1000, 8, 125.0)] {
            let h = plan_h(HRule::ScIdentical, t, m, Some(kappa))?;
            if h != 1 {
                failures.push(format!("plan_h(sc-iid, T={t}, M={m}, kappa={kappa}) = {h}"));
            }
        }
        let mut rng = RngStream::new(0xC9, 0);
        let mut planned = 0;
        let mut unmet = 0;
        for _ in 0..100 {
            let l = 10f64.powf(2.0 * rng.next_unit() - 1.0);
            let kappa = 10f64.powf(3.0 * rng.next_unit());
            let mu = l / kappa;
            let m = 2 + rng.draw_index(31).expect("nonempty");
            let t = m + rng.draw_index(1_000_000).expect("nonempty");
            let h = 1 + rng.draw_index(64).expect("nonempty");
            let tp = h as f64 + 4.0 * rng.next_unit();
            for rule in [
                GammaRule::ScUbv { t_param: tp },
                GammaRule::WcUbv,
                GammaRule::ScFiniteSum { t_param: tp },
                GammaRule::WcFiniteSum,
                GammaRule::WcHeterogeneous,
            ] {
                match plan_gamma(rule, l, Some(mu), m, t, h) {
                    Ok(plan) => {
                        planned += 1;
                        let th = rule.theorem();
                        let limit = stepsize_limit(th, l, if th.is_strongly_convex() { mu } else { 0.0 }, h, m);
                        let inputs = BoundInputs {
                            l,
                            mu: th.is_strongly_convex().then_some(mu),
                            gamma: plan.gamma,
                            t,
                            h,
                            m,
                            sigma_sq: Some(1.0),
                            sigma_opt_sq: Some(1.0),
                            sigma_dif_sq: Some(1.0),
                            r0_sq: 1.0,
                        };
                        if plan.gamma > limit * (1.0 + 1e-12) || BoundCurve::new(th, inputs).is_err() {
                            failures.push(format!("{rule} gave gamma {:e} above {limit:e}", plan.gamma));
                        }
                    }
                    Err(TheoryError::Hypothesis { .. }) => unmet += 1,
                    Err(e) => failures.push(format!("{rule}: {e}")),
                }
            }
        }
        Ok(verdict(
            failures.is_empty() && planned >= 100,
            if failures.is_empty() {
                format!("plan_h examples exact; {planned} planned stepsizes admissible, {unmet} rejected by named hypotheses")
            } else {
                failures.join("; ")
            },
        ))
    }

    // 10
    fn protocol_reproduction(&self) -> CliResult<Outcome> {
        let Some(ds) = load_optional("a9a", &self.data_dir)? else {
            return Ok(Outcome::Skip(format!(
                "warning: a9a not found via {}; place it there to run this check",
                crate::data::manifest_path(&self.data_dir).display()
            )));
        };
        let (ok, detail) = protocol(&ds, 20, &[1, 4, 16, 64], 64 * 150, &(0..4).collect::<Vec<_>>(), self.fault)?;
        Ok(verdict(ok, detail))
    }

    // 11
    fn local_gd_tradeoff(&self) -> CliResult<Outcome> {
        let ds = synthetic(SyntheticSpec { n: 1000, dim: 20, seed: 11, sort_by_label: true, ..Default::default() })?;
        let p = build_problem(&ds, 4, Regime::Heterogeneous, None)?;
        let r = reference_for(&p)?;
        let gamma = 1.0 / p.smoothness();
        let hs = [1usize, 2, 4, 8, 16];
        let t = 16 * 400;
        let traces = hs
            .par_iter()
            .map(|&h| {
                let cfg = RunConfig::new(4, Regime::Heterogeneous, SyncSchedule::uniform(h, t)?, gamma, DenseVector::zeros(p.dim()))
                    .with_mode(GradientMode::Full)
                    .with_record_every(t);
                run_local_sgd(&p, &self.prep(cfg), &r).map_err(CliError::from)
            })
            .collect::<CliResult<Vec<_>>>()?;
        let synced = |k: usize| -> Vec<(usize, f64)> {
            traces[k].records.iter().filter(|rec| rec.synced && rec.t > 0).map(|rec| (rec.round, rec.subopt)).collect()
        };
        let last = synced(hs.len() - 1);
        let tail = &last[last.len() - last.len() / 10..];
        let level = tail.iter().map(|v| v.1).sum::<f64>() / tail.len() as f64;
        let target = 10.0 * level;
        let rounds: Vec<Option<usize>> =
            (0..hs.len()).map(|k| synced(k).iter().find(|v| v.1 <= target).map(|v| v.0)).collect();
        let ok = level > 0.0
            && rounds.iter().all(Option::is_some)
            && rounds.windows(2).all(|w| w[1].unwrap_or(usize::MAX) <= w[0].unwrap_or(0));
        let shown: Vec<String> = hs
            .iter()
            .zip(&rounds)
            .map(|(h, r)| format!("H={h}: {}", r.map_or("never".to_string(), |v| v.to_string())))
            .collect();
        Ok(verdict(ok, format!("target {target:.3e} (10x the H=16 level); rounds to target {}", shown.join(", "))))
    }
}

fn synthetic(spec: SyntheticSpec) -> CliResult<Arc<Dataset<f64>>> {
    Ok(Arc::new(generate_synthetic(&spec)?))
}

/// Identical-data quadratic with curvatures spread over `[0.1, 1]` (so
/// `μ = 0.1`, `L = 1`) and exactly unit injected gradient noise.
fn noisy_quadratic(nodes: usize) -> CliResult<QuadraticProblem<f64>> {
    let d = 10;
    let curv: Vec<f64> = (0..d).map(|j| 0.1 + 0.9 * j as f64 / (d - 1) as f64).collect();
    let center: Vec<f64> = (0..d).map(|j| if j % 2 == 0 { 1.0 } else { -0.5 } * (1.0 + j as f64 / d as f64)).collect();
    Ok(QuadraticProblem::identical(vec![QuadraticComponent::new(curv, center)?], nodes, 1.0)?)
}

/// Stepsizes `1/L` and `0.05/L` over the given `H` values: every curve must
/// be nonincreasing (within noise) after round 50, and the larger stepsize
/// must settle at the higher level for every `H`.
pub fn protocol(
    ds: &Arc<Dataset<f64>>,
    nodes: usize,
    hs: &[usize],
    t: usize,
    seeds: &[u64],
    fault: FaultInjection,
) -> CliResult<(bool, String)> {
    let p = build_problem(ds, nodes, Regime::Identical, None)?;
    let r = reference_for(&p)?;
    let l = p.smoothness();
    let every = hs.iter().copied().max().unwrap_or(1);
    let mut ok = true;
    let mut parts = Vec::new();
    for &h in hs {
        let mut levels = Vec::new();
        for c in [1.0, 0.05] {
            let mut cfg = RunConfig::new(nodes, Regime::Identical, SyncSchedule::uniform(h, t)?, c / l, DenseVector::zeros(p.dim()))
                .with_record_every(every);
            cfg.record_syncs = false;
            cfg.fault = fault;
            let agg = run_replicated(&p, &cfg, &r, seeds)?;
            let (flat, level) = plateau_after(&agg, 50);
            ok &= flat;
            levels.push(level);
            parts.push(format!("H={h} {c}/L: level {level:.3e}{}", if flat { "" } else { " (still rising)" }));
        }
        ok &= levels[0] > levels[1];
    }
    Ok((ok, parts.join("; ")))
}

/// Splits the records after `round` into four windows and checks that each
/// window mean stays within 5% plus 3 standard errors of the previous one.
/// Returns the check and the last window's mean.
fn plateau_after(agg: &AggregateTrace, round: usize) -> (bool, f64) {
    let tail: Vec<MeanSe> = agg.rounds.iter().zip(&agg.dist_sq).filter(|(r, _)| **r >= round).map(|(_, s)| *s).collect();
    if tail.len() < 4 {
        return (false, f64::NAN);
    }
    let w = tail.len() / 4;
    let windows: Vec<(f64, f64)> = (0..4)
        .map(|i| {
            let chunk = &tail[i * w..if i == 3 { tail.len() } else { (i + 1) * w }];
            let mean = chunk.iter().map(|s| s.mean).sum::<f64>() / chunk.len() as f64;
            let se = chunk.iter().map(|s| s.se).fold(0.0, f64::max);
            (mean, se)
        })
        .collect();
    let flat = windows.windows(2).all(|p| p[1].0 <= p[0].0 * 1.05 + 3.0 * p[0].1.max(p[1].1));
    (flat, windows[3].0)
}

/// Machine-readable results.
pub fn results_json(level: Level, results: &[CriterionResult]) -> serde_json::Value {
    let count = |s: Status| results.iter().filter(|r| r.status == s).count();
    json!({
        "level": format!("{level:?}").to_lowercase(),
        "passed": count(Status::Pass),
        "failed": count(Status::Fail),
        "skipped": count(Status::Skip),
        "criteria": results.iter().map(|r| json!({
            "id": r.id,
            "name": r.name,
            "status": r.status.to_string(),
            "detail": r.detail,
            "elapsed_s": r.elapsed.as_secs_f64(),
            "budget_s": r.budget.as_secs(),
        })).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_runs_on_small_synthetic_data() {
        let ds = synthetic(SyntheticSpec { n: 400, dim: 10, seed: 10, ..Default::default() }).unwrap();
        let (ok, detail) = protocol(&ds, 4, &[1, 4], 4 * 120, &[0, 1, 2], FaultInjection::None).unwrap();
        assert!(ok, "{detail}");
    }

    #[test]
    fn plateau_detects_a_rising_curve() {
        let mk = |vals: &[f64]| AggregateTrace {
            seeds: vec![0, 1],
            steps: (0..vals.len()).collect(),
            synced: vec![true; vals.len()],
            rounds: (0..vals.len()).collect(),
            v_t: vec![MeanSe { mean: 0.0, se: 0.0 }; vals.len()],
            dist_sq: vals.iter().map(|&v| MeanSe { mean: v, se: 0.0 }).collect(),
            subopt: vec![MeanSe { mean: 0.0, se: 0.0 }; vals.len()],
            grad_sq: vec![None; vals.len()],
            bar_x_subopt: MeanSe { mean: 0.0, se: 0.0 },
            bar_x_lagged_subopt: MeanSe { mean: 0.0, se: 0.0 },
            comm_rounds: vals.len(),
            metadata: vec![],
        };
        let falling: Vec<f64> = (0..80).map(|i| 1.0 / (1.0 + i as f64)).collect();
        assert!(plateau_after(&mk(&falling), 0).0);
        let rising: Vec<f64> = (0..80).map(|i| 1.0 + i as f64).collect();
        assert!(!plateau_after(&mk(&rising), 0).0);
        assert!(!plateau_after(&mk(&[1.0, 2.0]), 0).0);
    }

    #[test]
    fn levels_parse() {
        assert_eq!("fast".parse::<Level>().unwrap(), Level::Fast);
        assert!("slow".parse::<Level>().is_err());
        assert_eq!(Level::Full.seeds().len(), 200);
    }
}
