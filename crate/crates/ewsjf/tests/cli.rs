use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"{
  "workload_config": { "total_requests": 400, "arrival_rate": 12.0 },
  "sweep": { "arrival_rates": [8.0, 24.0] },
  "metaopt": { "trials": 4 }
}"#;

fn ewsjf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ewsjf")).args(args).output().expect("binary runs")
}

fn setup() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, SMALL).unwrap();
    (dir, cfg)
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn run_writes_one_row_per_scheduler_and_rate() {
    let (dir, cfg) = setup();
    let out = dir.path().join("out");
    ok(&ewsjf(&["--config", s(&cfg), "--out", s(&out), "run"]));
    let rows = csv_rows(&out.join("metrics.csv"));
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| &r[2] == "ok"));
    for kind in ["ewsjf", "fcfs", "sjf"] {
        for rate in ["8", "24"] {
            assert!(out.join(format!("backlog_{kind}_{rate}.csv")).exists(), "{kind} {rate}");
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (dir, cfg) = setup();
    let runs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("run{i}"))).collect();
    for out in &runs {
        ok(&ewsjf(&["--config", s(&cfg), "--out", s(out), "--seed", "5", "generate"]));
        ok(&ewsjf(&["--config", s(&cfg), "--out", s(out), "--seed", "5", "run"]));
        ok(&ewsjf(&["--config", s(&cfg), "--out", s(out), "--seed", "5", "metaopt"]));
        ok(&ewsjf(&["--config", s(&cfg), "--out", s(out), "--seed", "5", "partition"]));
    }
    let mut names: Vec<_> = std::fs::read_dir(&runs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 10, "{names:?}");
    for name in names {
        let a = std::fs::read(runs[0].join(&name)).unwrap();
        let b = std::fs::read(runs[1].join(&name)).unwrap();
        assert!(a == b, "{name:?} differs");
    }
}

#[test]
fn pinned_single_queue_matches_fcfs() {
    let (dir, cfg) = setup();
    let out = dir.path().join("out");
    let partition = dir.path().join("one.json");
    std::fs::write(&partition, r#"{"queues": [{"id": 0, "min_len": 1, "max_len": 4294967295}]}"#).unwrap();
    let trace = dir.path().join("trace.jsonl");
    ok(&ewsjf(&["--config", s(&cfg), "generate", "--output", s(&trace)]));
    ok(&ewsjf(&[
        "--config", s(&cfg), "--out", s(&out), "run", "--trace", s(&trace),
        "--partition", s(&partition), "--scheduler", "ewsjf,fcfs",
    ]));
    let mut reader = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    // every metric except the scheduler name and the queue count
    let metrics = |r: &csv::StringRecord| -> Vec<String> {
        header.iter().zip(r.iter()).filter(|(h, _)| !matches!(*h, "scheduler" | "queues")).map(|(_, v)| v.to_string()).collect()
    };
    assert_eq!(metrics(&rows[0]), metrics(&rows[1]));
    assert_eq!(
        std::fs::read(out.join("backlog_ewsjf_trace.csv")).unwrap(),
        std::fs::read(out.join("backlog_fcfs_trace.csv")).unwrap()
    );
}

#[test]
fn metaopt_writes_trials_and_a_monotone_curve() {
    let (dir, cfg) = setup();
    let out = dir.path().join("out");
    ok(&ewsjf(&["--config", s(&cfg), "--out", s(&out), "metaopt", "--trials", "5"]));
    assert_eq!(csv_rows(&out.join("trials.csv")).len(), 5);
    let curve: Vec<f64> = csv_rows(&out.join("convergence.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(curve.len(), 5);
    assert!(curve.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn missing_config_is_reported_with_its_path() {
    let out = ewsjf(&["--config", "/nonexistent/cfg.json", "run"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/cfg.json"));
}

#[test]
fn malformed_trace_names_the_line() {
    let (dir, cfg) = setup();
    let trace = dir.path().join("bad.jsonl");
    std::fs::write(&trace, "{\"id\":\"a\",\"prompt_len\":5,\"output_len\":1,\"arrival_time\":0.0}\nnot json\n").unwrap();
    let out = ewsjf(&["--config", s(&cfg), "--out", s(dir.path()), "partition", "--trace", s(&trace)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.jsonl") && err.contains('2'), "{err}");
}
