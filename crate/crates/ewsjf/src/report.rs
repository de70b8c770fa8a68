//! CSV outputs and the console summary.

use std::fmt::Write as _;
use std::path::Path;

use ewsjf_core::engine::{BacklogSample, MetricsReport};
use ewsjf_core::metaopt::TrialRecord;
use serde::Serialize;

use crate::error::{io_at, Result};

/// One row of `metrics.csv`. Failed runs keep their key columns, carry the
/// error text, and leave the metric columns empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub scheduler: String,
    pub arrival_rate: f64,
    pub status: &'static str,
    pub error: String,
    pub requests_completed: Option<u64>,
    pub elapsed: Option<f64>,
    pub req_per_s: Option<f64>,
    pub tok_per_s: Option<f64>,
    pub ttft_mean: Option<f64>,
    pub ttft_p95: Option<f64>,
    pub short_count: Option<u64>,
    pub short_ttft_mean: Option<f64>,
    pub short_ttft_p95: Option<f64>,
    pub long_count: Option<u64>,
    pub long_ttft_mean: Option<f64>,
    pub long_ttft_p95: Option<f64>,
    pub max_wait: Option<f64>,
    pub pending_at_end: Option<u64>,
    pub busy_fraction: Option<f64>,
    pub within_queue_len_var: Option<f64>,
    pub len_var: Option<f64>,
    pub queues: Option<usize>,
    pub truncated: Option<bool>,
}

impl MetricsRow {
    pub fn ok(scheduler: &str, arrival_rate: f64, m: &MetricsReport, queues: usize) -> Self {
        Self {
            scheduler: scheduler.to_owned(),
            arrival_rate,
            status: "ok",
            error: String::new(),
            requests_completed: Some(m.requests_completed),
            elapsed: Some(m.elapsed),
            req_per_s: Some(m.req_per_s),
            tok_per_s: Some(m.tok_per_s),
            ttft_mean: Some(m.ttft_mean),
            ttft_p95: Some(m.ttft_p95),
            short_count: Some(m.short.count),
            short_ttft_mean: Some(m.short.ttft_mean),
            short_ttft_p95: Some(m.short.ttft_p95),
            long_count: Some(m.long.count),
            long_ttft_mean: Some(m.long.ttft_mean),
            long_ttft_p95: Some(m.long.ttft_p95),
            max_wait: Some(m.max_wait),
            pending_at_end: Some(m.pending_at_end),
            busy_fraction: Some(m.busy_fraction),
            within_queue_len_var: Some(m.within_queue_len_var),
            len_var: Some(m.len_var),
            queues: Some(queues),
            truncated: Some(m.truncated),
        }
    }

    pub fn failed(scheduler: &str, arrival_rate: f64, error: String) -> Self {
        Self {
            scheduler: scheduler.to_owned(),
            arrival_rate,
            status: "failed",
            error,
            requests_completed: None,
            elapsed: None,
            req_per_s: None,
            tok_per_s: None,
            ttft_mean: None,
            ttft_p95: None,
            short_count: None,
            short_ttft_mean: None,
            short_ttft_p95: None,
            long_count: None,
            long_ttft_mean: None,
            long_ttft_p95: None,
            max_wait: None,
            pending_at_end: None,
            busy_fraction: None,
            within_queue_len_var: None,
            len_var: None,
            queues: None,
            truncated: None,
        }
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_at(path))?;
    Ok(())
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn write_backlog(path: &Path, samples: &[BacklogSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time", "short_pending", "long_pending"])?;
    for s in samples {
        w.serialize((s.time, s.short_pending, s.long_pending))?;
    }
    w.flush().map_err(io_at(path))?;
    Ok(())
}

#[derive(Serialize)]
struct TrialRow {
    trial_index: usize,
    a_u: f64,
    b_u: f64,
    a_f: f64,
    b_f: f64,
    a_b: f64,
    b_b: f64,
    alpha: f64,
    bubble_width: u32,
    empty_threshold: u32,
    max_queues: usize,
    reward: f64,
    compactness: f64,
    balance: f64,
    sprawl: f64,
    latency: f64,
    tok_per_s: f64,
    short_ttft_p95: f64,
}

pub fn write_trials(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    write_rows(
        path,
        trials.iter().map(|t| TrialRow {
            trial_index: t.trial_index,
            a_u: t.theta.a_u,
            b_u: t.theta.b_u,
            a_f: t.theta.a_f,
            b_f: t.theta.b_f,
            a_b: t.theta.a_b,
            b_b: t.theta.b_b,
            alpha: t.theta.alpha,
            bubble_width: t.theta.bubble_width,
            empty_threshold: t.theta.empty_threshold,
            max_queues: t.theta.max_queues,
            reward: t.reward,
            compactness: t.terms.compactness,
            balance: t.terms.balance,
            sprawl: t.terms.sprawl,
            latency: t.terms.latency,
            tok_per_s: t.metrics.tok_per_s,
            short_ttft_p95: t.metrics.short.ttft_p95,
        }),
    )
}

pub fn write_convergence(path: &Path, best_so_far: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial_index", "best_so_far"])?;
    for (i, b) in best_so_far.iter().enumerate() {
        w.serialize((i, b))?;
    }
    w.flush().map_err(io_at(path))?;
    Ok(())
}

/// Fixed-width table of the ok rows, one line per run.
pub fn summary_table(rows: &[MetricsRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<9} {:>8} {:>10} {:>8} {:>9} {:>12} {:>12} {:>7}",
        "scheduler", "rate", "time (s)", "req/s", "tok/s", "short ttft", "long ttft", "status"
    );
    for r in rows {
        match (r.elapsed, r.req_per_s, r.tok_per_s, r.short_ttft_mean, r.long_ttft_mean) {
            (Some(t), Some(rq), Some(tk), Some(st), Some(lt)) => {
                let _ = writeln!(
                    s,
                    "{:<9} {:>8.2} {:>10.1} {:>8.3} {:>9.1} {:>12.3} {:>12.3} {:>7}",
                    r.scheduler, r.arrival_rate, t, rq, tk, st, lt, r.status
                );
            }
            _ => {
                let _ = writeln!(s, "{:<9} {:>8.2} {:>10} {:>8} {:>9} {:>12} {:>12} {:>7}", r.scheduler, r.arrival_rate, "-", "-", "-", "-", "-", r.status);
            }
        }
    }
    s
}
