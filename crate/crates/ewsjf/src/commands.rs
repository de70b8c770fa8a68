//! The four subcommands as library functions. Each writes its files into
//! the configured output directory and returns what it computed.

use std::path::{Path, PathBuf};

use ewsjf_core::engine::{run_simulation, PartitionSource};
use ewsjf_core::metaopt::{run_meta_loop, MetaLoopConfig, MetaLoopOutcome};
use ewsjf_core::partitioner::{refine_and_prune, QueuePartition, RefineOutcome};
use ewsjf_core::scheduler::SchedulerKind;
use ewsjf_core::workload::{generate_mixed_workload, RequestTrace, WorkloadConfig};

use crate::config::RunConfig;
use crate::error::{io_at, Error, Result};
use crate::partition_io::{load_partition, save_partition};
use crate::report::{summary_table, write_backlog, write_convergence, write_metrics, write_trials, MetricsRow};
use crate::trace_io::{load_trace, save_trace};

/// A trace to simulate and how many out-of-order pairs loading it repaired.
#[derive(Debug, Clone)]
pub struct TraceInput {
    pub trace: RequestTrace,
    pub inversions: u64,
}

/// Loads `path`, or generates the configured workload when `path` is `None`.
pub fn trace_input(path: Option<&Path>, workload: &WorkloadConfig) -> Result<TraceInput> {
    match path {
        Some(p) => {
            let loaded = load_trace(p)?;
            Ok(TraceInput { trace: loaded.trace, inversions: loaded.inversions })
        }
        None => Ok(TraceInput { trace: generate_mixed_workload(workload)?, inversions: 0 }),
    }
}

fn output_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    Ok(dir)
}

/// Writes the configured workload as JSONL to `out`, or to `trace.jsonl` in
/// the output directory.
pub fn cmd_generate(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf> {
    cfg.workload_config.validate()?;
    let path = match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(io_at(parent))?;
            }
            p.to_path_buf()
        }
        None => output_dir(cfg)?.join("trace.jsonl"),
    };
    save_trace(&generate_mixed_workload(&cfg.workload_config)?, &path)?;
    Ok(path)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Simulate this trace once per scheduler instead of sweeping rates.
    pub trace: Option<PathBuf>,
    /// Pin the EWSJF queues to this partition.
    pub partition: Option<PathBuf>,
    /// Overrides the sweep's scheduler list.
    pub schedulers: Option<Vec<SchedulerKind>>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub rows: Vec<MetricsRow>,
    pub inversions: u64,
    pub summary: String,
}

impl RunReport {
    /// `scheduler@rate: error` for every failed run.
    pub fn failures(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| r.status != "ok")
            .map(|r| format!("{}@{}: {}", r.scheduler, r.arrival_rate, r.error))
            .collect()
    }
}

/// One simulation per (scheduler, arrival rate), ordered by scheduler then
/// rate. Writes `metrics.csv` and one `backlog_<scheduler>_<rate>.csv` per
/// successful run (`<rate>` is `trace` for a trace file). A failing run
/// becomes a failed row and does not stop the others.
pub fn cmd_run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let dir = output_dir(cfg)?;
    let pinned = opts.partition.as_deref().map(load_partition).transpose()?;
    let schedulers = opts.schedulers.clone().unwrap_or_else(|| cfg.sweep.schedulers.clone());

    let mut inputs: Vec<(f64, String, Result<TraceInput>)> = Vec::new();
    if let Some(path) = &opts.trace {
        let input = trace_input(Some(path), &cfg.workload_config)?;
        let t = &input.trace;
        let rate = if t.last_arrival() > 0.0 { t.len() as f64 / t.last_arrival() } else { 0.0 };
        inputs.push((rate, "trace".into(), Ok(input)));
    } else {
        for &rate in &cfg.sweep.arrival_rates {
            let workload = WorkloadConfig { arrival_rate: rate, ..cfg.workload_config.clone() };
            inputs.push((rate, format!("{rate}"), trace_input(None, &workload)));
        }
    }

    let mut rows = Vec::new();
    let mut inversions = 0;
    for kind in &schedulers {
        for (rate, label, input) in &inputs {
            let outcome = input.as_ref().map_err(|e| e.to_string()).and_then(|input| {
                inversions = input.inversions;
                simulate(cfg, *kind, &input.trace, pinned.as_ref()).map_err(|e| e.to_string())
            });
            match outcome {
                Ok((metrics, queues)) => {
                    write_backlog(&dir.join(format!("backlog_{kind}_{label}.csv")), &metrics.backlog_trace)?;
                    rows.push(MetricsRow::ok(kind.as_str(), *rate, &metrics, queues));
                }
                Err(e) => rows.push(MetricsRow::failed(kind.as_str(), *rate, e)),
            }
        }
    }
    write_metrics(&dir.join("metrics.csv"), &rows)?;
    let summary = summary_table(&rows);
    Ok(RunReport { rows, inversions, summary })
}

fn simulate(
    cfg: &RunConfig,
    kind: SchedulerKind,
    trace: &RequestTrace,
    pinned: Option<&QueuePartition>,
) -> Result<(ewsjf_core::engine::MetricsReport, usize)> {
    let source = match pinned {
        Some(p) => PartitionSource::Fixed(p.clone()),
        None => PartitionSource::Strategic { initial: None, params: cfg.partition_params },
    };
    let out = run_simulation(trace, &cfg.engine(kind), &cfg.meta_params, source)?;
    let queues = out.partition.as_ref().map_or(0, QueuePartition::len);
    Ok((out.metrics, queues))
}

/// Runs the meta-optimization loop on the trace and writes `trials.csv` and
/// `convergence.csv`.
pub fn cmd_metaopt(cfg: &RunConfig, trace: Option<&Path>) -> Result<(MetaLoopOutcome, u64)> {
    cfg.validate()?;
    let dir = output_dir(cfg)?;
    let input = trace_input(trace, &cfg.workload_config)?;
    let loop_cfg = MetaLoopConfig {
        engine: cfg.engine(SchedulerKind::Ewsjf),
        partition: cfg.partition_params,
        bounds: cfg.metaopt.bounds,
        reward: cfg.reward_config,
        search: cfg.metaopt.search,
        trials: cfg.metaopt.trials,
        seed: cfg.metaopt.seed,
    };
    let outcome = run_meta_loop(&input.trace, &loop_cfg)?;
    write_trials(&dir.join("trials.csv"), &outcome.trials)?;
    write_convergence(&dir.join("convergence.csv"), &outcome.best_so_far)?;
    Ok((outcome, input.inversions))
}

/// Partitions the trace's prompt lengths with `partition_params` and writes
/// `partition.json`.
pub fn cmd_partition(cfg: &RunConfig, trace: Option<&Path>) -> Result<(RefineOutcome, u64)> {
    cfg.partition_params.validate()?;
    let dir = output_dir(cfg)?;
    let input = trace_input(trace, &cfg.workload_config)?;
    if input.trace.is_empty() {
        return Err(Error::Usage("cannot partition an empty trace".into()));
    }
    let outcome = refine_and_prune(&input.trace.sorted_prompt_lens(), &cfg.partition_params)?;
    save_partition(&outcome.partition, &dir.join("partition.json"))?;
    Ok((outcome, input.inversions))
}
