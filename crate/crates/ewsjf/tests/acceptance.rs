//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::cell::Cell;
use std::hint::black_box;
use std::ops::Range;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ewsjf::config::SweepConfig;
use ewsjf_core::costmodel::CostModelParams;
use ewsjf_core::engine::{run_simulation, EngineConfig, MetricsReport, PartitionSource};
use ewsjf_core::metaopt::{run_meta_loop, MetaLoopConfig, RewardConfig, SearchConfig, ThetaBounds};
use ewsjf_core::partitioner::{
    kmeans_1d, refine_and_prune, refine_cluster_traced, NodeOutcome, PartitionParams, QueueId, QueuePartition,
    QueueSpec,
};
use ewsjf_core::scheduler::{
    score_queue, wait_for_score, BatchBudget, MetaParams, SchedulerKind, SchedulerState, ScoringWeights,
};
use ewsjf_core::workload::{generate_mixed_workload, Request, RequestTrace, WorkloadConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn trace(rate: f64, n: usize, seed: u64) -> RequestTrace {
    let cfg = WorkloadConfig { arrival_rate: rate, total_requests: n, rng_seed: seed, ..WorkloadConfig::default() };
    generate_mixed_workload(&cfg).unwrap()
}

fn simulate(trace: &RequestTrace, kind: SchedulerKind) -> MetricsReport {
    let cfg = EngineConfig { scheduler: kind, ..EngineConfig::default() };
    run_simulation(trace, &cfg, &MetaParams::default(), PartitionSource::default()).unwrap().metrics
}

const LARGE_TRACE: usize = 30_000;

fn c1_throughput_ordering() -> Verdict {
    let rates = SweepConfig::default().arrival_rates;
    let mut speedups = Vec::new();
    let mut detail = Vec::new();
    for &rate in &rates {
        let t = trace(rate, LARGE_TRACE, 7);
        let e = simulate(&t, SchedulerKind::Ewsjf).tok_per_s;
        let f = simulate(&t, SchedulerKind::Fcfs).tok_per_s;
        speedups.push(e / f);
        detail.push(format!("rate {rate}: {e:.0} vs {f:.0} tok/s"));
    }
    let first = speedups[0];
    let last = *speedups.last().unwrap();
    let pass = speedups.iter().all(|&s| s >= 1.0) && last > first && last >= 1.10;
    verdict(pass, format!("{}; speedup {first:.2} -> {last:.2}", detail.join(", ")))
}

fn c2_short_ttft() -> Verdict {
    let rate = *SweepConfig::default().arrival_rates.last().unwrap();
    let mut held = 0;
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let t = trace(rate, LARGE_TRACE, seed);
        let e = simulate(&t, SchedulerKind::Ewsjf).short.ttft_mean;
        let f = simulate(&t, SchedulerKind::Fcfs).short.ttft_mean;
        if e <= 0.5 * f {
            held += 1;
        }
        ratios.push(format!("{:.3}", e / f));
    }
    verdict(held >= 4, format!("rate {rate}: EWSJF/FCFS short ttft_mean [{}], {held}/5 seeds <= 0.5", ratios.join(", ")))
}

fn c3_sjf_starvation() -> Verdict {
    let rate = 40.0;
    let t = trace(rate, LARGE_TRACE, 7);
    let boundary = EngineConfig::default().class_boundary;
    let longs = t.requests().iter().filter(|r| r.prompt_len >= boundary).count() as u64;
    let capacity = BatchBudget::default().max_requests as u64;

    let sjf = simulate(&t, SchedulerKind::Sjf);
    let series: Vec<u64> = sjf.backlog_trace.iter().map(|s| s.long_pending).collect();
    let monotone = series.windows(2).all(|w| w[0] <= w[1]);
    let last = series.last().copied().unwrap_or(0);
    let starved = monotone && last + capacity >= longs;

    let ewsjf = simulate(&t, SchedulerKind::Ewsjf);
    let fair = MetaParams::default().b_f > 0.0;
    let drained = ewsjf.pending_at_end == 0 && ewsjf.long.count == longs && ewsjf.max_wait.is_finite();
    verdict(
        starved && fair && drained,
        format!(
            "rate {rate}: SJF long backlog non-decreasing {monotone}, final {last} of {longs}; \
             EWSJF pending {} long completed {} max_wait {:.0}s",
            ewsjf.pending_at_end, ewsjf.long.count, ewsjf.max_wait
        ),
    )
}

fn c4_starvation_freedom() -> Verdict {
    let cost = (1e-4f64..0.05, 0.0f64..0.001, 0.0f64..1e-7).prop_map(|(c0, c1, c2)| CostModelParams {
        prefill_c0: c0,
        prefill_c1: c1,
        prefill_c2: c2,
        ..CostModelParams::default()
    });
    let weights = (0.0f64..5.0, 0.01f64..5.0, 0.0f64..5.0).prop_map(|(w_base, w_urg, w_fair)| ScoringWeights {
        w_base,
        w_urg,
        w_fair,
    });
    let sample = (1u32..20_000, 1usize..64, 0.0f64..1e4, 0.0f64..1e4, 1e-3f64..1e3, 0.0f64..1e6, weights, cost);
    let failures = Cell::new(0u32);
    let result = runner(10_000).run(&sample, |(b, index, arrival, wait, delta, target, w, c)| {
        let head = Request::new("h", b, 1, arrival).unwrap();
        let q = QueueSpec { index, ..QueueSpec::with_bounds(QueueId(0), 1, 100_000) };
        let now = arrival + wait;
        let grows = score_queue(&head, &q, &w, now + delta, &c).unwrap() > score_queue(&head, &q, &w, now, &c).unwrap();
        let w_needed = wait_for_score(target, index, b, &w, &c).unwrap();
        let past = arrival + w_needed + 1e-6 * (1.0 + w_needed);
        let reaches = w_needed.is_finite() && score_queue(&head, &q, &w, past, &c).unwrap() > target;
        if !(grows && reaches) {
            failures.set(failures.get() + 1);
        }
        Ok(())
    });
    let n = failures.get();
    verdict(result.is_ok() && n == 0, format!("10000 samples, {n} failures"))
}

fn dataset() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec((1u32..20_000, 0u32..400, 1usize..300), 1..6).prop_flat_map(|clusters| {
        let parts: Vec<_> = clusters
            .into_iter()
            .map(|(centre, spread, n)| prop::collection::vec(centre.saturating_sub(spread).max(1)..=centre + spread, n))
            .collect();
        parts.prop_map(|parts| {
            let mut v: Vec<u32> = parts.into_iter().flatten().collect();
            v.sort_unstable();
            v
        })
    })
}

fn partition_params() -> impl Strategy<Value = PartitionParams> {
    (1.05f64..6.0, 1u32..64, 1usize..40, 0.1f64..4.0, 1usize..6).prop_map(|(alpha, min_width, max_queues, epsilon, coarse_k)| {
        PartitionParams { alpha, min_width, max_queues, epsilon, coarse_k, ..PartitionParams::default() }
    })
}

fn expected_outcome(values: &[u32], alpha: f64, min_width: u32) -> NodeOutcome {
    if values.len() < 2 {
        return NodeOutcome::Trivial;
    }
    if values[values.len() - 1] - values[0] < min_width {
        return NodeOutcome::WidthStop;
    }
    let gaps: Vec<u32> = values.windows(2).map(|w| w[1] - w[0]).filter(|&g| g > 0).collect();
    let total: u64 = gaps.iter().map(|&g| u64::from(g)).sum();
    let mean_gap = total as f64 / gaps.len() as f64;
    let threshold = alpha * mean_gap;
    let cuts: Vec<usize> = (1..values.len()).filter(|&j| f64::from(values[j] - values[j - 1]) > threshold).collect();
    if cuts.is_empty() {
        NodeOutcome::NoSignificantGap { mean_gap, threshold }
    } else {
        NodeOutcome::Split { mean_gap, threshold, cuts }
    }
}

fn valid_partition(p: &QueuePartition, lengths: &[u32], max_queues: usize) -> bool {
    let qs = p.queues();
    !qs.is_empty()
        && qs.len() <= max_queues
        && p.is_contiguous()
        && qs.iter().all(|q| q.min_len < q.max_len)
        && qs.windows(2).all(|w| w[0].max_len <= w[1].min_len)
        && p.covers() == Some((lengths[0], lengths[lengths.len() - 1] + 1))
        && lengths.iter().all(|&b| qs.iter().filter(|q| q.contains(b)).count() == 1)
}

fn c5_partition_correctness() -> Verdict {
    let bad_partitions = Cell::new(0u32);
    let nodes = Cell::new(0u64);
    let disagreements = Cell::new(0u64);
    let result = runner(1_000).run(&(dataset(), partition_params()), |(lengths, p)| {
        let out = refine_and_prune(&lengths, &p).unwrap();
        if !valid_partition(&out.partition, &lengths, p.max_queues) {
            bad_partitions.set(bad_partitions.get() + 1);
        }
        let distinct = 1 + lengths.windows(2).filter(|w| w[0] != w[1]).count();
        for c in kmeans_1d(&lengths, p.coarse_k.min(distinct)).unwrap() {
            let cluster = &lengths[c];
            let (_, trace) = refine_cluster_traced(cluster, p.alpha, p.min_width);
            for node in trace {
                nodes.set(nodes.get() + 1);
                let range: Range<usize> = node.range.clone();
                if node.outcome != expected_outcome(&cluster[range], p.alpha, p.min_width) {
                    disagreements.set(disagreements.get() + 1);
                }
            }
        }
        Ok(())
    });
    let pass = result.is_ok() && bad_partitions.get() == 0 && disagreements.get() == 0;
    verdict(
        pass,
        format!(
            "1000 datasets, {} invalid partitions; split oracle agreed on {} of {} nodes",
            bad_partitions.get(),
            nodes.get() - disagreements.get(),
            nodes.get()
        ),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Placement {
    Left,
    Right,
    Bubble(u32, u32),
}

/// The bubble listing traced step by step for the gap between the two queues.
fn listing(l: u32, left_max: u32, right_min: u32, width: u32) -> Placement {
    if f64::from(l) <= f64::from(left_max) * 1.10 {
        return Placement::Left;
    }
    if f64::from(l) >= f64::from(right_min) * 0.90 {
        return Placement::Right;
    }
    let range = width.min(right_min - left_max);
    let new_min = (i64::from(l) - i64::from(range / 2)).max(i64::from(left_max)) as u32;
    let new_max = (u64::from(l) + u64::from(range - range / 2)).min(u64::from(right_min)) as u32;
    Placement::Bubble(new_min, new_max)
}

fn c6_bubble_oracle() -> Verdict {
    let partition = QueuePartition::new(vec![
        QueueSpec::with_bounds(QueueId(0), 0, 100),
        QueueSpec::with_bounds(QueueId(1), 200, 500),
    ])
    .unwrap();
    let meta = MetaParams { bubble_width: 40, ..MetaParams::default() };
    let mut mismatches = Vec::new();
    for l in 100..=200u32 {
        let mut s =
            SchedulerState::new(partition.clone(), meta, BatchBudget::default(), CostModelParams::default()).unwrap();
        let id = s.create_bubble_queue(l);
        let got = match id.0 {
            0 => Placement::Left,
            1 => Placement::Right,
            _ => {
                let q = s.queues().find(|q| q.id == id).unwrap();
                Placement::Bubble(q.min_len, q.max_len)
            }
        };
        let want = if l >= 200 { Placement::Right } else { listing(l, 100, 200, 40) };
        if got != want {
            mismatches.push(format!("L={l}: {got:?} vs {want:?}"));
        }
    }
    verdict(mismatches.is_empty(), format!("101 lengths, {} mismatches {}", mismatches.len(), mismatches.join("; ")))
}

fn c7_degeneracy() -> Verdict {
    let single = QueuePartition::new(vec![QueueSpec::with_bounds(QueueId(0), 1, u32::MAX)]).unwrap();
    let constant = MetaParams { a_u: 0.0, a_f: 0.0, a_b: 0.0, ..MetaParams::default() };
    let input = (any::<u64>(), 1.0f64..60.0, 1usize..1_500, 1usize..64, 256u64..16_384);
    let identical = Cell::new(0u32);
    let batches = Cell::new(0usize);
    let result = runner(100).run(&input, |(seed, rate, n, max_requests, max_tokens)| {
        let t = trace(rate, n, seed);
        let ids = |kind| {
            let cfg = EngineConfig {
                scheduler: kind,
                batch_budget: BatchBudget { max_requests, max_tokens },
                record_batches: true,
                ..EngineConfig::default()
            };
            let out = run_simulation(&t, &cfg, &constant, PartitionSource::Fixed(single.clone())).unwrap();
            out.batches.into_iter().map(|b| b.ids).collect::<Vec<_>>()
        };
        let fcfs = ids(SchedulerKind::Fcfs);
        batches.set(batches.get() + fcfs.len());
        if ids(SchedulerKind::Ewsjf) == fcfs {
            identical.set(identical.get() + 1);
        }
        Ok(())
    });
    verdict(
        result.is_ok() && identical.get() == 100,
        format!("{} of 100 traces identical ({} FCFS batches)", identical.get(), batches.get()),
    )
}

fn c8_metaopt_convergence() -> Verdict {
    let t = generate_mixed_workload(&WorkloadConfig::default()).unwrap();
    let mut settled = 0;
    let mut monotone = true;
    let mut detail = Vec::new();
    for seed in 0..5 {
        let cfg = MetaLoopConfig {
            engine: EngineConfig::default(),
            partition: PartitionParams::default(),
            bounds: ThetaBounds::default(),
            reward: RewardConfig::default(),
            search: SearchConfig::default(),
            trials: 12,
            seed,
        };
        let curve = run_meta_loop(&t, &cfg).unwrap().best_so_far;
        monotone &= curve.windows(2).all(|w| w[0] <= w[1]);
        let range = curve[11] - curve[0];
        let late = curve[11] - curve[7];
        let ok = late <= 0.0 || late < 0.02 * range;
        if ok {
            settled += 1;
        }
        detail.push(format!("seed {seed}: late {:.1}%", if range > 0.0 { 100.0 * late / range } else { 0.0 }));
    }
    verdict(
        settled >= 4 && monotone,
        format!("{}; {settled}/5 settled after trial 8, curves non-decreasing {monotone}", detail.join(", ")),
    )
}

/// Median time of one tactical step with `k` equally loaded queues. Each
/// dispatched request is routed back so occupancy stays constant; the timed
/// loop therefore also includes one routing per step.
fn tactical_step_cost(k: usize) -> Duration {
    const PER_QUEUE: usize = 64;
    const STEPS: usize = 2_000;
    let queues = (0..k).map(|i| QueueSpec::with_bounds(QueueId(i as u32), 1 + 100 * i as u32, 101 + 100 * i as u32));
    let partition = QueuePartition::new(queues.collect()).unwrap();
    let budget = BatchBudget { max_requests: 1, max_tokens: 1 << 20 };
    let mut fresh = SchedulerState::new(partition, MetaParams::default(), budget, CostModelParams::default()).unwrap();
    for j in 0..PER_QUEUE {
        for i in 0..k {
            fresh.route(Request::new(format!("{i}-{j}"), 1 + 100 * i as u32 + j as u32, 1, 0.0).unwrap());
        }
    }
    let mut samples = Vec::new();
    for _ in 0..9 {
        let mut state = fresh.clone();
        let mut now = 1.0;
        let start = Instant::now();
        for _ in 0..STEPS {
            now += 1e-3;
            for r in state.tactical_step(black_box(now)).batch {
                state.route(black_box(r));
            }
        }
        samples.push(start.elapsed() / STEPS as u32);
    }
    samples.sort();
    samples[samples.len() / 2]
}

fn c9_tactical_complexity() -> Verdict {
    let costs: Vec<(usize, Duration)> = [8, 32, 128].into_iter().map(|k| (k, tactical_step_cost(k))).collect();
    let ratio = costs[2].1.as_secs_f64() / costs[0].1.as_secs_f64();
    let shown: Vec<String> = costs.iter().map(|(k, d)| format!("k={k}: {:.0} ns", d.as_secs_f64() * 1e9)).collect();
    verdict(ratio <= 24.0, format!("{}; cost(128)/cost(8) = {ratio:.1}", shown.join(", ")))
}

fn c10_cli_determinism() -> Verdict {
    let dir = tempfile::TempDir::new().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"workload_config": {"total_requests": 1500}, "sweep": {"arrival_rates": [8.0, 32.0]}, "metaopt": {"trials": 5}}"#,
    )
    .unwrap();
    let run = |out: &Path| -> bool {
        ["generate", "run", "metaopt", "partition"].iter().all(|cmd| {
            Command::new(env!("CARGO_BIN_EXE_ewsjf"))
                .args(["--config", cfg.to_str().unwrap(), "--seed", "11", "--out", out.to_str().unwrap(), cmd])
                .output()
                .map(|o| o.status.success())
                .unwrap_or(false)
        })
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    if !(run(&a) && run(&b)) {
        return verdict(false, "a CLI command failed".into());
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    verdict(
        differing.is_empty() && names.len() >= 10,
        format!("{} output files compared, differing: {:?}", names.len(), differing),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("C1 throughput ordering", c1_throughput_ordering),
        ("C2 short-request TTFT", c2_short_ttft),
        ("C3 SJF starvation", c3_sjf_starvation),
        ("C4 starvation freedom", c4_starvation_freedom),
        ("C5 partition correctness", c5_partition_correctness),
        ("C6 bubble queue oracle", c6_bubble_oracle),
        ("C7 single-queue degeneracy", c7_degeneracy),
        ("C8 meta-optimizer convergence", c8_metaopt_convergence),
        ("C9 tactical step complexity", c9_tactical_complexity),
        ("C10 CLI determinism", c10_cli_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{status} {name}: {} [{:.1}s]", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
