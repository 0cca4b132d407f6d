use std::sync::Arc;

use localsgd::dataio::{generate_synthetic, parse_libsvm, partition, Regime, SyntheticSpec};
use localsgd::numkit::DenseVector;
use localsgd::objective::{measure_variances, solve_reference, Batch, Problem, SolverOptions};
use localsgd::simulator::{run_local_sgd, SyncSchedule};
use localsgd::theory::formula;
use localsgd::{Dataset32, Dataset64, Problem64, RunConfig32, RunConfig64};

fn problem(n: usize, nodes: usize, regime: Regime, sorted: bool) -> Problem64 {
    let ds: Dataset64 =
        generate_synthetic(&SyntheticSpec { n, dim: 8, seed: 5, sort_by_label: sorted, ..Default::default() }).unwrap();
    let part = partition(n, nodes, regime).unwrap();
    Problem::new(Arc::new(ds), part, 1.0 / n as f64).unwrap()
}

#[test]
fn libsvm_text_to_trace() {
    let text = "+1 1:0.5 3:1\n-1 2:-1 3:0.25\n+1 1:1 2:0.5\n-1 3:-0.5\n";
    let ds: Dataset64 = parse_libsvm(text.as_bytes(), "tiny").unwrap();
    assert_eq!((ds.len(), ds.dim()), (4, 3));
    let p = Problem::new(Arc::new(ds), partition(4, 2, Regime::Heterogeneous).unwrap(), 0.25).unwrap();
    let r = solve_reference(&p, &SolverOptions::default()).unwrap();
    let cfg = RunConfig64::new(2, Regime::Heterogeneous, SyncSchedule::uniform(2, 40).unwrap(), 0.5, DenseVector::zeros(3));
    let tr = run_local_sgd(&p, &cfg, &r).unwrap();
    let last = tr.records.last().unwrap();
    assert_eq!(last.t, 40);
    assert!(last.subopt < tr.records[0].subopt);
}

#[test]
fn same_seed_same_trace() {
    let p = problem(300, 4, Regime::Identical, false);
    let r = solve_reference(&p, &SolverOptions::default()).unwrap();
    let cfg = RunConfig64::new(4, Regime::Identical, SyncSchedule::uniform(5, 200).unwrap(), 0.1, DenseVector::zeros(8))
        .with_seed(9)
        .with_batch(Batch::Sampled(2));
    assert_eq!(run_local_sgd(&p, &cfg, &r).unwrap(), run_local_sgd(&p, &cfg, &r).unwrap());
    let other = run_local_sgd(&p, &cfg.clone().with_seed(10), &r).unwrap();
    assert_ne!(other, run_local_sgd(&p, &cfg, &r).unwrap());
}

#[test]
fn single_precision_runs() {
    let spec = SyntheticSpec { n: 200, dim: 8, seed: 1, ..Default::default() };
    let ds32: Dataset32 = generate_synthetic(&spec).unwrap();
    let p32 = Problem::new(Arc::new(ds32), partition(200, 2, Regime::Heterogeneous).unwrap(), 1.0 / 200.0).unwrap();
    let r32 = solve_reference(&p32, &SolverOptions::default()).unwrap();
    assert!(r32.tolerance > 1e-10 && r32.grad_norm <= r32.tolerance);
    let cfg = RunConfig32::new(2, Regime::Heterogeneous, SyncSchedule::uniform(4, 100).unwrap(), 0.1, DenseVector::zeros(8));
    let tr = run_local_sgd(&p32, &cfg, &r32).unwrap();
    assert!(tr.records.iter().all(|rec| rec.subopt.is_finite()));
    assert!(tr.records.last().unwrap().subopt < tr.records[0].subopt);
}

#[test]
fn sorted_split_inflates_heterogeneous_variance() {
    let ident = problem(1000, 20, Regime::Identical, true);
    let het = ident.repartition(20, Regime::Heterogeneous).unwrap();
    let r = solve_reference(&ident, &SolverOptions::default()).unwrap();
    let a = measure_variances(&ident, &r, Batch::Sampled(4), &[]).unwrap();
    let b = measure_variances(&het, &r, Batch::Sampled(4), &[]).unwrap();
    assert!(b.sigma_dif_sq > a.sigma_opt_sq, "{} vs {}", b.sigma_dif_sq, a.sigma_opt_sq);
    // larger batches shrink both
    let c = measure_variances(&het, &r, Batch::Sampled(16), &[]).unwrap();
    assert!(c.sigma_dif_sq < b.sigma_dif_sq && c.sigma_opt_sq < b.sigma_opt_sq);
}

#[test]
fn degenerate_bound_cases() {
    let (l, g, t, r0) = (2.0, 0.1, 500, 3.0);
    // noiseless convex bounds collapse to their distance terms
    assert_eq!(formula::wc_identical_ubv(l, g, t, 1, 4, 0.0, r0).iter().sum::<f64>(), 2.0 * r0 / (g * t as f64));
    assert_eq!(formula::wc_identical_fs(l, g, t, 7, 4, 0.0, r0).iter().sum::<f64>(), 10.0 * r0 / (g * t as f64));
    assert_eq!(formula::wc_heterogeneous(l, g, t, 50, 4, 0.0, r0).iter().sum::<f64>(), 4.0 * r0 / (g * t as f64));
    // H = 1 drops the local-drift term
    assert_eq!(formula::wc_heterogeneous(l, g, t, 1, 4, 1.5, r0)[2], 0.0);
    assert_eq!(formula::sc_identical_ubv(l, 0.5, g, t, 1, 4, 1.5, r0)[2], 0.0);
}
