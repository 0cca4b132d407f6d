//! The `variances`, `run`, `plan` and `solve-ref` subcommands. Each returns
//! its results and writes its files from a single place after all runs have
//! finished.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use localsgd::dataio::Regime;
use localsgd::numkit::DenseVector;
use localsgd::objective::{measure_variances, Batch, Objective, Problem, ReferenceSolution, VarianceReport};
use localsgd::simulator::{
    run_local_sgd, run_minibatch_sgd, run_replicated_traces, AggregateTrace, RunConfig, SimError, SyncSchedule, Trace,
};
use localsgd::theory::{
    check_bound, plan_gamma, plan_h, BoundCurve, BoundInputs, GammaRule, HRule, StepsizePlan, TheoremId, Verdict,
};
use serde_json::json;

use crate::config::{ExperimentConfig, GammaSpec, ScheduleSpec};
use crate::data::{build_problem, load_dataset, reference_for};
use crate::{CliError, CliResult};

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    std::fs::write(&p, contents)?;
    Ok(p)
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Failed(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Failed(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn sci(v: f64) -> String {
    format!("{v:e}")
}

// ---------------------------------------------------------------- solve-ref

pub fn cmd_solve_ref(cfg: &ExperimentConfig) -> CliResult<ReferenceSolution<f64>> {
    let ds = load_dataset(&cfg.dataset, &cfg.data_dir)?;
    let m = cfg.single_nodes()?;
    let problem = build_problem(&ds, m, cfg.regime, cfg.lambda)?;
    let r = reference_for(&problem)?;
    let mut kv = format!("dataset={}\nnodes={m}\nregime={}\nlambda={:e}\nL={:e}\n", cfg.dataset, cfg.regime, problem.lambda(), problem.smoothness());
    kv.push_str(&r.to_kv());
    write_file(&cfg.out_dir, "reference.txt", &kv)?;
    write_file(&cfg.out_dir, "x_star.csv", &r.to_csv())?;
    Ok(r)
}

// ---------------------------------------------------------------- variances

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceRow {
    pub nodes: usize,
    pub report: VarianceReport<f64>,
}

/// Sweeps every configured `M` and batch. The reference optimum is that of
/// the full-data objective, shared by all rows.
pub fn cmd_variances(cfg: &ExperimentConfig) -> CliResult<Vec<VarianceRow>> {
    let ds = load_dataset(&cfg.dataset, &cfg.data_dir)?;
    let base = build_problem(&ds, 1, Regime::Identical, cfg.lambda)?;
    let reference = reference_for(&base)?;
    let mut rows = Vec::new();
    for &m in &cfg.nodes {
        let problem = base.repartition(m, cfg.regime)?;
        for &b in &cfg.batches {
            let report = measure_variances(&problem, &reference, b, &[])?;
            rows.push(VarianceRow { nodes: m, report });
        }
    }
    let name = cfg.dataset.to_string();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                name.clone(),
                r.nodes.to_string(),
                r.report.batch.to_string(),
                sci(r.report.sigma_opt_sq),
                sci(r.report.sigma_dif_sq),
                sci(r.report.dif_lower_bound),
                sci(r.report.sigma_sq),
            ]
        })
        .collect();
    let csv = csv_string(
        &["dataset", "M", "batch", "sigma_opt_sq", "sigma_dif_sq", "dif_lower_bound", "sigma_sq_estimate"],
        &table,
    )?;
    write_file(&cfg.out_dir, "variances.csv", &csv)?;
    let mut kv = reference.to_kv();
    let _ = writeln!(kv, "lambda={:e}", base.lambda());
    write_file(&cfg.out_dir, "reference.txt", &kv)?;
    Ok(rows)
}

// ---------------------------------------------------------------------- run

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub h: usize,
    pub gamma: f64,
    pub comm_rounds: usize,
    /// `ok` or the reason the run stopped.
    pub status: String,
    pub final_subopt: Option<(f64, f64)>,
    pub final_dist_sq: Option<(f64, f64)>,
    pub bar_x_subopt: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerdictRow {
    pub label: String,
    pub theorem: TheoremId,
    /// `None` when the theorem's hypotheses do not hold for this run.
    pub verdict: Option<Verdict>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub summary: Vec<SummaryRow>,
    pub verdicts: Vec<VerdictRow>,
    /// Largest relative gap between the `H = 1` curve and the minibatch
    /// baseline, when the sweep contains `H = 1`.
    pub minibatch_gap: Option<f64>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn any_violation(&self) -> bool {
        self.verdicts.iter().any(|v| v.verdict.as_ref().is_some_and(|v| !v.holds))
    }
}

/// The constants a bound needs, fixed for a whole sweep.
struct Constants {
    l: f64,
    l_component: f64,
    mu: f64,
    nodes: usize,
    r0_sq: f64,
    variances: VarianceReport<f64>,
}

fn rule_smoothness(rule: GammaRule, c: &Constants) -> f64 {
    match rule {
        GammaRule::ScUbv { .. } | GammaRule::WcUbv => c.l,
        _ => c.l_component,
    }
}

fn resolve_schedule(spec: &ScheduleSpec, t: usize, m: usize, kappa: f64) -> CliResult<(String, SyncSchedule)> {
    Ok(match spec {
        ScheduleSpec::Uniform(h) => (format!("H{h}"), SyncSchedule::uniform(*h, t)?),
        ScheduleSpec::OneShot => ("one-shot".into(), SyncSchedule::one_shot(t)?),
        ScheduleSpec::Explicit(steps) => {
            let s = SyncSchedule::from_steps(steps.clone(), t)?;
            (format!("explicit-H{}", s.h()), s)
        }
        ScheduleSpec::Planned(rule) => {
            let kappa = rule.needs_kappa().then_some(kappa);
            let h = plan_h(*rule, t, m, kappa)?;
            (format!("H{h}-{rule}"), SyncSchedule::uniform(h, t)?)
        }
    })
}

fn resolve_gamma(spec: &GammaSpec, c: &Constants, t: usize, h: usize) -> CliResult<(f64, Option<StepsizePlan>)> {
    Ok(match spec {
        GammaSpec::Absolute(v) => (*v, None),
        GammaSpec::OverL(k) => (k / c.l, None),
        GammaSpec::Planner(rule) => {
            let plan = plan_gamma(*rule, rule_smoothness(*rule, c), Some(c.mu), c.nodes, t, h)?;
            (plan.gamma, Some(plan))
        }
    })
}

fn theorems_for(regime: Regime) -> &'static [TheoremId] {
    match regime {
        Regime::Identical => &[TheoremId::ScIidUbv, TheoremId::WcIidUbv, TheoremId::ScIidFs, TheoremId::WcIidFs],
        Regime::Heterogeneous => &[TheoremId::WcHetFs],
    }
}

/// The bound for one theorem, or why it does not apply.
fn bound_for(theorem: TheoremId, c: &Constants, gamma: f64, schedule: &SyncSchedule) -> Result<BoundCurve, String> {
    let ubv = matches!(theorem, TheoremId::ScIidUbv | TheoremId::WcIidUbv);
    let mu = if theorem.is_strongly_convex() {
        if c.mu <= 0.0 {
            return Err("needs mu > 0".into());
        }
        Some(c.mu)
    } else {
        None
    };
    let inputs = BoundInputs {
        l: if ubv { c.l } else { c.l_component },
        mu,
        gamma,
        t: schedule.final_step(),
        h: schedule.h(),
        m: c.nodes,
        sigma_sq: Some(c.variances.sigma_sq),
        sigma_opt_sq: Some(c.variances.sigma_opt_sq),
        sigma_dif_sq: Some(c.variances.sigma_dif_sq),
        r0_sq: c.r0_sq,
    };
    let curve = BoundCurve::new(theorem, inputs).map_err(|e| e.to_string())?;
    Ok(match theorem {
        TheoremId::ScIidFs => curve.at_sync_steps(schedule.sync_steps()),
        _ => curve.estimated(ubv),
    })
}

fn replicate(problem: &Problem<f64>, cfg: &RunConfig<f64>, reference: &ReferenceSolution<f64>, seeds: &[u64], minibatch: bool) -> Result<AggregateTrace, SimError> {
    let traces: Vec<Trace<f64>> = if minibatch {
        seeds
            .iter()
            .map(|&seed| run_minibatch_sgd(problem, &RunConfig { seed, ..cfg.clone() }, reference))
            .collect::<Result<_, _>>()?
    } else if seeds.len() >= 2 {
        run_replicated_traces(problem, cfg, reference, seeds)?
    } else {
        vec![run_local_sgd(problem, &RunConfig { seed: seeds[0], ..cfg.clone() }, reference)?]
    };
    AggregateTrace::from_traces(&traces, seeds)
}

fn relative_gap(a: &AggregateTrace, b: &AggregateTrace) -> f64 {
    a.dist_sq
        .iter()
        .zip(&b.dist_sq)
        .map(|(x, y)| (x.mean - y.mean).abs() / y.mean.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Sweeps the configured schedules: replicated runs, every applicable bound
/// and its verdict, and the emitted files. Divergence of one run is
/// reported in the summary and does not stop the sweep.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    let ds = load_dataset(&cfg.dataset, &cfg.data_dir)?;
    let m = cfg.single_nodes()?;
    let batch = cfg.single_batch()?;
    let problem = build_problem(&ds, m, cfg.regime, cfg.lambda)?;
    let reference = reference_for(&problem)?;
    let x0 = DenseVector::zeros(problem.dim());
    let probe_batch = match cfg.gradient_mode {
        localsgd::simulator::GradientMode::Full => Batch::Full,
        localsgd::simulator::GradientMode::Stochastic => batch,
    };
    let c = Constants {
        l: problem.smoothness(),
        l_component: problem.component_smoothness(),
        mu: problem.mu(),
        nodes: m,
        r0_sq: reference.x_star.norm_sq(),
        variances: measure_variances(&problem, &reference, probe_batch, &[])?,
    };
    let kappa = c.l / c.mu;

    let mut out: Vec<(String, String)> = Vec::new();
    let mut summary = Vec::new();
    let mut verdicts = Vec::new();
    let mut h1: Option<(AggregateTrace, RunConfig<f64>)> = None;

    for spec in &cfg.schedules {
        let (label, schedule) = resolve_schedule(spec, cfg.t, m, kappa)?;
        let h = schedule.h();
        let (gamma, plan) = resolve_gamma(&cfg.gamma, &c, cfg.t, h)?;
        let mut run = RunConfig::new(m, cfg.regime, schedule.clone(), gamma, x0.clone())
            .with_batch(batch)
            .with_mode(cfg.gradient_mode);
        if let Some(k) = cfg.record_every {
            run = run.with_record_every(k);
        }
        let mut row = SummaryRow {
            label: label.clone(),
            h,
            gamma,
            comm_rounds: schedule.comm_rounds(),
            status: "ok".into(),
            final_subopt: None,
            final_dist_sq: None,
            bar_x_subopt: None,
        };
        let mut agg = match replicate(&problem, &run, &reference, &cfg.seeds, false) {
            Ok(a) => a,
            Err(e @ SimError::Diverged { .. }) => {
                row.status = format!("diverged: {e}");
                summary.push(row);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let k = agg.len() - 1;
        row.final_subopt = Some((agg.subopt[k].mean, agg.subopt[k].se));
        row.final_dist_sq = Some((agg.dist_sq[k].mean, agg.dist_sq[k].se));
        let bar = if cfg.regime == Regime::Heterogeneous { agg.bar_x_lagged_subopt } else { agg.bar_x_subopt };
        row.bar_x_subopt = Some((bar.mean, bar.se));
        summary.push(row);

        for (key, v) in [
            ("label", label.clone()),
            ("dataset", cfg.dataset.to_string()),
            ("lambda", sci(problem.lambda())),
            ("gamma_spec", cfg.gamma.to_string()),
            ("sigma_sq_estimate", sci(c.variances.sigma_sq)),
            ("sigma_opt_sq", sci(c.variances.sigma_opt_sq)),
            ("sigma_dif_sq", sci(c.variances.sigma_dif_sq)),
        ] {
            agg.metadata.push((key.to_string(), v));
        }
        if let Some(p) = plan {
            agg.metadata.push(("gamma_limit".into(), sci(p.limit)));
        }

        for &theorem in theorems_for(cfg.regime) {
            match bound_for(theorem, &c, gamma, &schedule) {
                Ok(curve) => {
                    let file = format!("bound_{label}_{}.csv", theorem.as_str());
                    out.push((file, curve.to_csv(&agg.steps)));
                    let verdict = check_bound(&curve, &agg)?;
                    verdicts.push(VerdictRow { label: label.clone(), theorem, note: verdict.details.clone(), verdict: Some(verdict) });
                }
                Err(reason) => verdicts.push(VerdictRow { label: label.clone(), theorem, verdict: None, note: reason }),
            }
        }
        out.push((format!("trace_{label}.csv"), agg.to_csv()));
        if *spec == ScheduleSpec::Uniform(1) {
            h1 = Some((agg, run));
        }
    }

    let mut minibatch_gap = None;
    if let Some((agg, run)) = h1 {
        let base = replicate(&problem, &run, &reference, &cfg.seeds, true)?;
        minibatch_gap = Some(relative_gap(&agg, &base));
        out.push(("minibatch.csv".into(), base.to_csv()));
    }

    out.push(("summary.csv".into(), summary_csv(&summary)?));
    out.push(("verdicts.csv".into(), verdicts_csv(&verdicts)?));
    out.push(("config.txt".into(), cfg.echo()));
    out.push(("variances.txt".into(), c.variances.to_kv()));
    out.push(("reference.txt".into(), reference.to_kv()));
    let report = json!({
        "dataset": cfg.dataset.to_string(),
        "nodes": m,
        "regime": cfg.regime.to_string(),
        "L": c.l,
        "L_component": c.l_component,
        "mu": c.mu,
        "minibatch_max_rel_gap": minibatch_gap,
        "summary": summary.iter().map(|r| json!({
            "label": r.label, "H": r.h, "gamma": r.gamma, "comm_rounds": r.comm_rounds, "status": r.status,
            "final_subopt": r.final_subopt.map(|v| v.0), "final_dist_sq": r.final_dist_sq.map(|v| v.0),
        })).collect::<Vec<_>>(),
        "verdicts": verdicts.iter().map(|v| json!({
            "label": v.label, "theorem": v.theorem.as_str(),
            "holds": v.verdict.as_ref().map(|x| x.holds),
            "margin": v.verdict.as_ref().map(|x| x.margin),
            "note": v.note,
        })).collect::<Vec<_>>(),
        "files": out.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
    });
    out.push(("report.json".into(), serde_json::to_string_pretty(&report).expect("json") + "\n"));

    let mut files = Vec::new();
    for (name, body) in &out {
        files.push(write_file(&cfg.out_dir, name, body)?);
    }
    Ok(RunReport { summary, verdicts, minibatch_gap, files })
}

fn opt_pair(v: Option<(f64, f64)>) -> [String; 2] {
    match v {
        Some((a, b)) => [sci(a), sci(b)],
        None => [String::new(), String::new()],
    }
}

fn summary_csv(rows: &[SummaryRow]) -> CliResult<String> {
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.label.clone(), r.h.to_string(), sci(r.gamma), r.comm_rounds.to_string(), r.status.clone()];
            v.extend(opt_pair(r.final_subopt));
            v.extend(opt_pair(r.final_dist_sq));
            v.extend(opt_pair(r.bar_x_subopt));
            v
        })
        .collect();
    csv_string(
        &[
            "label", "H", "gamma", "comm_rounds", "status", "final_subopt_mean", "final_subopt_se",
            "final_dist_sq_mean", "final_dist_sq_se", "bar_x_subopt_mean", "bar_x_subopt_se",
        ],
        &table,
    )
}

fn verdicts_csv(rows: &[VerdictRow]) -> CliResult<String> {
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| match &r.verdict {
            Some(v) => vec![
                r.label.clone(),
                r.theorem.as_str().into(),
                if v.holds { "holds" } else { "violated" }.into(),
                sci(v.margin),
                sci(v.slack_ratio),
                v.worst_step.to_string(),
                v.compared_steps.to_string(),
                v.rhs_estimated.to_string(),
                r.note.clone(),
            ],
            None => vec![
                r.label.clone(),
                r.theorem.as_str().into(),
                "skipped".into(),
                String::new(),
                String::new(),
                String::new(),
                "0".into(),
                String::new(),
                r.note.clone(),
            ],
        })
        .collect();
    csv_string(
        &["label", "theorem", "status", "margin", "slack_ratio", "worst_step", "compared_steps", "rhs_estimated", "note"],
        &table,
    )
}

// --------------------------------------------------------------------- plan

pub fn plan_h_report(rule: HRule, t: usize, m: usize, kappa: Option<f64>) -> CliResult<String> {
    let h = plan_h(rule, t, m, kappa)?;
    let mut s = format!("rule={rule}\nT={t}\nM={m}\n");
    if let Some(k) = kappa {
        let _ = writeln!(s, "kappa={k}");
    }
    let _ = writeln!(s, "H={h}\ncomm_rounds={}", t.div_ceil(h));
    Ok(s)
}

pub fn plan_gamma_report(rule: GammaRule, l: f64, mu: Option<f64>, m: usize, t: usize, h: usize) -> CliResult<String> {
    let p = plan_gamma(rule, l, mu, m, t, h)?;
    let mut s = format!("rule={rule}\ntheorem={}\nL={l}\n", p.theorem);
    if let Some(mu) = mu {
        let _ = writeln!(s, "mu={mu}");
    }
    let _ = writeln!(s, "M={m}\nT={t}\nH={h}\ngamma={:e}\ngamma_limit={:e}", p.gamma, p.limit);
    if let Some(st) = p.suggested_t {
        let _ = writeln!(s, "suggested_T={st}");
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn config(dir: &Path, extra: &[(&str, &str)]) -> ExperimentConfig {
        let mut m = BTreeMap::new();
        for (k, v) in [
            ("dataset", "synthetic:n=200,dim=5,seed=3,sorted"),
            ("T", "120"),
            ("seeds", "0..4"),
            ("schedule", "1,4,one-shot"),
            ("gamma", "0.2/L"),
            ("dir", dir.to_str().unwrap()),
        ]
        .iter()
        .chain(extra)
        {
            m.insert(k.to_string(), v.to_string());
        }
        ExperimentConfig::from_pairs(m).unwrap()
    }

    #[test]
    fn run_writes_every_file_and_matches_minibatch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &[("regime", "identical")]);
        let rep = cmd_run(&cfg).unwrap();
        assert_eq!(rep.summary.len(), 3);
        assert!(rep.summary.iter().all(|r| r.status == "ok"));
        assert!(rep.minibatch_gap.unwrap() <= 1e-12);
        assert_eq!(rep.summary[1].comm_rounds, 30);
        for f in &rep.files {
            assert!(f.is_file(), "{}", f.display());
        }
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        for f in json["files"].as_array().unwrap() {
            assert!(dir.path().join(f.as_str().unwrap()).is_file());
        }
        // bounds were evaluated where their stepsize conditions hold
        assert!(rep.verdicts.iter().any(|v| v.verdict.is_some()));
        let trace = std::fs::read_to_string(dir.path().join("trace_H4.csv")).unwrap();
        assert!(trace.contains("# lambda=") && trace.contains("# sigma_opt_sq=") && trace.contains("# gamma="));
    }

    #[test]
    fn run_is_byte_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        cmd_run(&config(a.path(), &[("regime", "het"), ("gamma", "wc-het"), ("schedule", "1,4")])).unwrap();
        cmd_run(&config(b.path(), &[("regime", "het"), ("gamma", "wc-het"), ("schedule", "1,4")])).unwrap();
        for name in ["trace_H4.csv", "summary.csv", "verdicts.csv", "report.json", "minibatch.csv"] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
    }

    #[test]
    fn divergence_is_reported_per_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &[("gamma", "5000/L"), ("schedule", "4")]);
        let rep = cmd_run(&cfg).unwrap();
        assert!(rep.summary[0].status.starts_with("diverged"), "{}", rep.summary[0].status);
    }

    #[test]
    fn variances_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &[("nodes", "1,4"), ("batch", "1,4,full")]);
        let rows = cmd_variances(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        let m1 = &rows[0].report;
        assert!((m1.sigma_dif_sq - m1.sigma_opt_sq).abs() <= 1e-12 * m1.sigma_opt_sq);
        // larger batches shrink both quantities
        assert!(rows[4].report.sigma_opt_sq < rows[3].report.sigma_opt_sq);
        assert!(rows[4].report.sigma_dif_sq < rows[3].report.sigma_dif_sq);
        let text = std::fs::read_to_string(dir.path().join("variances.csv")).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("dataset,M,batch,sigma_opt_sq,sigma_dif_sq"));
    }

    #[test]
    fn plan_reports() {
        let s = plan_h_report(HRule::WcHeterogeneous, 256, 4, None).unwrap();
        assert!(s.contains("H=2\n"));
        let s = plan_gamma_report(GammaRule::WcFiniteSum, 1.0, None, 4, 400, 10).unwrap();
        assert!(s.contains("gamma=1e-2"), "{s}");
        assert_eq!(plan_h_report(HRule::WcIdentical, 10, 2, Some(3.0)).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn solve_ref_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &[]);
        let r = cmd_solve_ref(&cfg).unwrap();
        assert!(r.grad_norm <= r.tolerance);
        assert!(dir.path().join("reference.txt").is_file() && dir.path().join("x_star.csv").is_file());
    }
}
