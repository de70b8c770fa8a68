use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ewsjf::commands::{cmd_generate, cmd_metaopt, cmd_partition, cmd_run, RunOptions};
use ewsjf::config::RunConfig;
use ewsjf::{Error, Result};
use ewsjf_core::metaopt::ThetaBounds;
use ewsjf_core::scheduler::SchedulerKind;
use ewsjf_core::workload::WorkloadConfig;

/// Mixed-workload LLM request scheduling simulator.
#[derive(Parser)]
#[command(name = "ewsjf", version)]
struct Cli {
    /// JSON run configuration; absent sections use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for workload generation and the meta-optimizer.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TraceArgs {
    /// JSONL trace to use instead of a generated workload.
    #[arg(long, conflicts_with = "generate")]
    trace: Option<PathBuf>,
    /// Generate the workload from the configuration (the default).
    #[arg(long)]
    generate: bool,
    /// JSON workload configuration replacing the config's workload section.
    #[arg(long)]
    workload_config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic trace as JSONL.
    Generate {
        #[arg(long)]
        workload_config: Option<PathBuf>,
        /// Trace file to write (default: <out>/trace.jsonl).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate every scheduler at every sweep rate and write metrics.csv.
    Run {
        #[command(flatten)]
        trace: TraceArgs,
        /// Schedulers to run (ewsjf, fcfs, sjf); repeat or separate by commas.
        #[arg(long, value_delimiter = ',')]
        scheduler: Vec<SchedulerKind>,
        /// Pin the EWSJF queues to this partition JSON.
        #[arg(long)]
        partition: Option<PathBuf>,
    },
    /// Tune the meta-parameters and write trials.csv and convergence.csv.
    Metaopt {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long)]
        trials: Option<usize>,
        /// JSON search box over the meta-parameters.
        #[arg(long)]
        bounds: Option<PathBuf>,
    },
    /// Partition a trace's prompt lengths and write partition.json.
    Partition {
        #[command(flatten)]
        trace: TraceArgs,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

fn apply_workload(cfg: &mut RunConfig, path: Option<&Path>, seed: Option<u64>) -> Result<()> {
    if let Some(p) = path {
        cfg.workload_config = read_json::<WorkloadConfig>(p)?;
        if let Some(s) = seed {
            cfg.workload_config.rng_seed = s;
        }
    }
    Ok(())
}

fn warn_inversions(n: u64) {
    if n > 0 {
        eprintln!("warning: trace arrivals were out of order; sorted {n} inverted pairs");
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }

    match cli.command {
        Command::Generate { workload_config, output } => {
            apply_workload(&mut cfg, workload_config.as_deref(), cli.seed)?;
            let path = cmd_generate(&cfg, output.as_deref())?;
            println!("wrote {} requests to {}", cfg.workload_config.total_requests, path.display());
        }
        Command::Run { trace, scheduler, partition } => {
            apply_workload(&mut cfg, trace.workload_config.as_deref(), cli.seed)?;
            let opts = RunOptions {
                trace: trace.trace,
                partition,
                schedulers: (!scheduler.is_empty()).then_some(scheduler),
            };
            let report = cmd_run(&cfg, &opts)?;
            warn_inversions(report.inversions);
            print!("{}", report.summary);
            let failed = report.failures();
            if !failed.is_empty() {
                for f in &failed {
                    eprintln!("failed: {f}");
                }
                return Err(Error::RunsFailed { failed, total: report.rows.len() });
            }
        }
        Command::Metaopt { trace, trials, bounds } => {
            apply_workload(&mut cfg, trace.workload_config.as_deref(), cli.seed)?;
            if let Some(t) = trials {
                cfg.metaopt.trials = t;
            }
            if let Some(b) = bounds {
                cfg.metaopt.bounds = read_json::<ThetaBounds>(&b)?;
            }
            let (out, inversions) = cmd_metaopt(&cfg, trace.trace.as_deref())?;
            warn_inversions(inversions);
            println!("{:>5} {:>12} {:>12}", "trial", "reward", "best");
            for (t, best) in out.trials.iter().zip(&out.best_so_far) {
                println!("{:>5} {:>12.4} {:>12.4}", t.trial_index, t.reward, best);
            }
            println!("best reward {:.4} with {:?}", out.best_reward, out.best);
        }
        Command::Partition { trace } => {
            apply_workload(&mut cfg, trace.workload_config.as_deref(), cli.seed)?;
            let (out, inversions) = cmd_partition(&cfg, trace.trace.as_deref())?;
            warn_inversions(inversions);
            if out.coarse_k_fallback {
                eprintln!("warning: fewer distinct lengths than coarse_k; used k = {}", out.coarse_k);
            }
            for q in out.partition.queues() {
                println!("{:>4} [{}, {}) count {}", q.id.0, q.min_len, q.max_len, q.count);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
