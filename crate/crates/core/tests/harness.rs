use std::collections::BTreeMap;

use seqsearch::estimation::Method;
use seqsearch::harness::{read_report_csv, run_monte_carlo, run_replication, write_outputs, MonteCarloConfig};

fn smoke_config(methods: Vec<Method>) -> MonteCarloConfig {
    MonteCarloConfig {
        replications: 5,
        sample_sizes: vec![200],
        draws: 20,
        rho_by_n: BTreeMap::from([(200, 10.0)]),
        methods,
        workers: Some(1),
        ..MonteCarloConfig::default()
    }
}

#[test]
fn replication_is_reproducible() {
    let cfg = smoke_config(vec![Method::Benchmark]);
    let table = cfg.table.build().unwrap();
    let a = run_replication(2, 200, &cfg, &table).unwrap();
    let b = run_replication(2, 200, &cfg, &table).unwrap();
    assert_eq!(a.results.len(), 1);
    assert!(a.results[0].same_estimate(&b.results[0]));
    let other = run_replication(3, 200, &cfg, &table).unwrap();
    assert!(!a.results[0].same_estimate(&other.results[0]));
}

#[test]
fn replication_outside_config_is_rejected() {
    let cfg = smoke_config(vec![Method::Benchmark]);
    let table = cfg.table.build().unwrap();
    assert!(run_replication(5, 200, &cfg, &table).is_err());
    assert!(run_replication(0, 300, &cfg, &table).is_err());
}

#[test]
fn method_subset_produces_only_those_cells() {
    let out = run_monte_carlo(&smoke_config(vec![Method::Benchmark])).unwrap();
    assert_eq!(out.runs.len(), 5);
    assert!(out.report.cell(200, Method::Benchmark).is_some());
    assert!(out.report.cell(200, Method::Mpec).is_none());
    assert!(out.runs.iter().all(|r| r.results.iter().all(|e| e.loglik.is_finite())));
}

#[test]
fn smoke_run_writes_outputs() {
    let cfg = MonteCarloConfig {
        replications: 2,
        ..smoke_config(vec![Method::Mpec, Method::Benchmark])
    };
    let out = run_monte_carlo(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("## N = 200"));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(read_report_csv(&csv).unwrap().len(), 10);
    for r in 0..2 {
        for m in ["mpec", "benchmark"] {
            assert!(dir.path().join(format!("runs/N200/rep{r}/{m}.json")).is_file());
        }
    }
}

#[test]
fn worker_count_does_not_change_report() {
    let mut cfg = smoke_config(vec![Method::Benchmark]);
    cfg.replications = 3;
    let a = run_monte_carlo(&cfg).unwrap();
    cfg.workers = Some(3);
    let b = run_monte_carlo(&cfg).unwrap();
    assert_eq!(a.report.to_csv(), b.report.to_csv());
}
