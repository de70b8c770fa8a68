//! Discrete-event simulation of a single batch-serial serving engine.
//!
//! Events are arrivals from the trace, batch completions, and (for EWSJF with
//! a strategic partition source) periodic strategic and online ticks. Events
//! at the same instant are handled in the order completion, strategic tick,
//! online tick, arrival, and all of them are processed before the idle engine
//! asks the scheduler for the next batch.

mod metrics;

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use crate::costmodel::{batch_timing, CostModelParams};
use crate::partitioner::{online_adjust, refine_and_prune, PartitionParams, QueueId, QueuePartition};
use crate::scheduler::{
    BatchBudget, FcfsScheduler, MetaParams, Scheduler, SchedulerKind, SchedulerState, SjfScheduler,
};
use crate::workload::{Request, RequestTrace};
use crate::{Error, Result};

pub use metrics::{compute_metrics, percentile_nearest_rank, BacklogSample, ClassStats, MetricsReport};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EngineConfig {
    pub scheduler: SchedulerKind,
    pub batch_budget: BatchBudget,
    pub cost_model: CostModelParams,
    /// Seconds between strategic re-partitioning runs.
    pub strategic_interval: f64,
    /// Seconds between online boundary adjustments.
    pub online_interval: f64,
    /// Stop at this simulated time even if work remains.
    pub horizon: Option<f64>,
    /// Prompts shorter than this count as short in the per-class metrics.
    pub class_boundary: u32,
    /// Most recent completed requests kept for a strategic run.
    pub monitor_window: usize,
    /// Seconds between backlog samples.
    pub backlog_interval: f64,
    /// Keep a record of every batch in the outcome.
    pub record_batches: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            scheduler: SchedulerKind::Ewsjf,
            batch_budget: BatchBudget::default(),
            cost_model: CostModelParams::default(),
            strategic_interval: 600.0,
            online_interval: 60.0,
            horizon: None,
            class_boundary: 512,
            monitor_window: 50_000,
            backlog_interval: 10.0,
            record_batches: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.batch_budget.validate()?;
        self.cost_model.validate()?;
        if !(self.online_interval > 0.0 && self.strategic_interval > self.online_interval) {
            return Err(Error::Config("need strategic_interval > online_interval > 0".into()));
        }
        if !self.strategic_interval.is_finite() {
            return Err(Error::Config("strategic_interval must be finite".into()));
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Config("horizon must be finite and positive".into()));
            }
        }
        if self.class_boundary < 1 || self.monitor_window < 1 {
            return Err(Error::Config("class_boundary and monitor_window must be >= 1".into()));
        }
        if !(self.backlog_interval.is_finite() && self.backlog_interval > 0.0) {
            return Err(Error::Config("backlog_interval must be finite and positive".into()));
        }
        Ok(())
    }
}

/// Where the EWSJF scheduler's queues come from. Ignored by the baselines.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionSource {
    /// A pinned partition; no strategic or online updates.
    Fixed(QueuePartition),
    /// Start from `initial` (or, if absent, a partition of the whole trace's
    /// prompt lengths) and re-partition on the strategic and online ticks.
    /// `alpha` and `max_queues` are taken from the [`MetaParams`].
    Strategic { initial: Option<QueuePartition>, params: PartitionParams },
}

impl Default for PartitionSource {
    fn default() -> Self {
        PartitionSource::Strategic { initial: None, params: PartitionParams::default() }
    }
}

/// One dispatched batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub start: f64,
    pub end: f64,
    pub primary: Option<QueueId>,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub metrics: MetricsReport,
    /// EWSJF queues at the end of the run, bubbles included.
    pub partition: Option<QueuePartition>,
    /// Filled only when [`EngineConfig::record_batches`] is set.
    pub batches: Vec<BatchRecord>,
    /// Completed requests in completion order.
    pub completed: Vec<Request>,
    /// Queue scores evaluated over the run.
    pub score_evaluations: u64,
}

/// Event kinds in their same-instant processing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Completion,
    StrategicTick,
    OnlineTick,
    Arrival,
}

#[derive(Debug)]
enum Policy {
    Ewsjf(SchedulerState),
    Fcfs(FcfsScheduler),
    Sjf(SjfScheduler),
}

impl Policy {
    fn get(&self) -> &dyn Scheduler {
        match self {
            Policy::Ewsjf(s) => s,
            Policy::Fcfs(s) => s,
            Policy::Sjf(s) => s,
        }
    }

    fn get_mut(&mut self) -> &mut dyn Scheduler {
        match self {
            Policy::Ewsjf(s) => s,
            Policy::Fcfs(s) => s,
            Policy::Sjf(s) => s,
        }
    }
}

/// Push-button simulation with an event-at-a-time interface.
#[derive(Debug)]
pub struct Simulation {
    config: EngineConfig,
    meta: MetaParams,
    arrivals: Vec<Request>,
    cursor: usize,
    policy: Policy,
    strategic: Option<PartitionParams>,
    published: Option<QueuePartition>,
    now: f64,
    in_flight: Vec<Request>,
    busy_until: Option<f64>,
    busy_time: f64,
    completed: Vec<Request>,
    strategic_window: VecDeque<u32>,
    online_window: VecDeque<u32>,
    next_strategic: f64,
    next_online: f64,
    short_pending: u64,
    long_pending: u64,
    last_arrival: f64,
    sample_k: u64,
    sampling_done: bool,
    backlog: Vec<BacklogSample>,
    batches: Vec<BatchRecord>,
    score_evaluations: u64,
    truncated: bool,
    finished: bool,
}

impl Simulation {
    pub fn new(trace: &RequestTrace, config: EngineConfig, meta: MetaParams, source: PartitionSource) -> Result<Self> {
        config.validate()?;
        meta.validate()?;
        for r in trace.requests() {
            r.validate()?;
        }
        let budget = config.batch_budget;
        let mut strategic = None;
        let mut published = None;
        let policy = match config.scheduler {
            SchedulerKind::Fcfs => Policy::Fcfs(FcfsScheduler::new(budget)),
            SchedulerKind::Sjf => Policy::Sjf(SjfScheduler::new(budget)),
            SchedulerKind::Ewsjf => {
                let partition = match source {
                    PartitionSource::Fixed(p) => p,
                    PartitionSource::Strategic { initial, params } => {
                        let params = PartitionParams { alpha: meta.alpha, max_queues: meta.max_queues, ..params };
                        params.validate()?;
                        strategic = Some(params);
                        let p = match initial {
                            Some(p) => p,
                            None if trace.is_empty() => QueuePartition::default(),
                            None => refine_and_prune(&trace.sorted_prompt_lens(), &params)?.partition,
                        };
                        published = Some(p.clone());
                        p
                    }
                };
                Policy::Ewsjf(SchedulerState::new(partition, meta, budget, config.cost_model)?)
            }
        };
        Ok(Self {
            next_strategic: config.strategic_interval,
            next_online: config.online_interval,
            last_arrival: trace.last_arrival(),
            config,
            meta,
            arrivals: trace.requests().to_vec(),
            cursor: 0,
            policy,
            strategic,
            published,
            now: 0.0,
            in_flight: Vec::new(),
            busy_until: None,
            busy_time: 0.0,
            completed: Vec::new(),
            strategic_window: VecDeque::new(),
            online_window: VecDeque::new(),
            short_pending: 0,
            long_pending: 0,
            sample_k: 0,
            sampling_done: trace.is_empty(),
            backlog: Vec::new(),
            batches: Vec::new(),
            score_evaluations: 0,
            truncated: false,
            finished: false,
        })
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn arrived(&self) -> usize {
        self.cursor
    }

    pub fn pending(&self) -> usize {
        self.policy.get().pending()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn completed(&self) -> &[Request] {
        &self.completed
    }

    pub fn is_busy(&self) -> bool {
        self.busy_until.is_some()
    }

    fn has_work(&self) -> bool {
        self.cursor < self.arrivals.len() || self.busy_until.is_some() || self.pending() > 0
    }

    fn next_event(&self) -> Option<(f64, EventKind)> {
        let mut best: Option<(f64, EventKind)> = None;
        let mut offer = |t: f64, k: EventKind| {
            let better = match best {
                None => true,
                Some((bt, bk)) => t < bt || (t == bt && k < bk),
            };
            if better {
                best = Some((t, k));
            }
        };
        if let Some(t) = self.busy_until {
            offer(t, EventKind::Completion);
        }
        if let Some(r) = self.arrivals.get(self.cursor) {
            offer(r.arrival_time, EventKind::Arrival);
        }
        if self.strategic.is_some() && self.has_work() {
            offer(self.next_strategic, EventKind::StrategicTick);
            offer(self.next_online, EventKind::OnlineTick);
        }
        best
    }

    fn next_sample_time(&self) -> Option<f64> {
        if self.sampling_done {
            return None;
        }
        let t = self.sample_k as f64 * self.config.backlog_interval;
        Some(if t < self.last_arrival { t } else { self.last_arrival })
    }

    /// Records backlog samples due strictly before `t` (or at or before it
    /// when `inclusive`).
    fn sample_until(&mut self, t: f64, inclusive: bool) {
        while let Some(s) = self.next_sample_time() {
            if s > t || (s == t && !inclusive) {
                break;
            }
            self.backlog.push(BacklogSample {
                time: s,
                short_pending: self.short_pending,
                long_pending: self.long_pending,
            });
            if s >= self.last_arrival {
                self.sampling_done = true;
            }
            self.sample_k += 1;
        }
    }

    /// Processes the next event and, once every event at this instant is
    /// done, dispatches a batch if the engine is idle. Returns `None` when the
    /// run is over.
    pub fn step(&mut self) -> Option<EventKind> {
        if self.finished {
            return None;
        }
        let Some((t, kind)) = self.next_event() else {
            self.finished = true;
            return None;
        };
        if let Some(h) = self.config.horizon {
            if t > h {
                self.truncated = true;
                self.finished = true;
                self.now = h;
                return None;
            }
        }
        self.sample_until(t, false);
        self.now = t;
        match kind {
            EventKind::Completion => self.complete_batch(),
            EventKind::StrategicTick => self.strategic_tick(),
            EventKind::OnlineTick => self.online_tick(),
            EventKind::Arrival => self.arrive(),
        }
        let same_instant = self.next_event().is_some_and(|(next, _)| next == t);
        if !same_instant && self.busy_until.is_none() && self.pending() > 0 {
            self.dispatch();
        }
        Some(kind)
    }

    fn is_short(&self, r: &Request) -> bool {
        r.prompt_len < self.config.class_boundary
    }

    fn arrive(&mut self) {
        let r = self.arrivals[self.cursor].clone();
        self.cursor += 1;
        if self.is_short(&r) {
            self.short_pending += 1;
        } else {
            self.long_pending += 1;
        }
        let now = self.now;
        self.policy.get_mut().enqueue(r, now);
    }

    fn complete_batch(&mut self) {
        let end = self.busy_until.take().expect("completion without a running batch");
        let cap = self.config.monitor_window;
        for mut r in core::mem::take(&mut self.in_flight) {
            r.completion_time = Some(end);
            if self.strategic.is_some() {
                push_capped(&mut self.strategic_window, r.prompt_len, cap);
                push_capped(&mut self.online_window, r.prompt_len, cap);
            }
            self.completed.push(r);
        }
    }

    fn dispatch(&mut self) {
        let now = self.now;
        let out = self.policy.get_mut().step(now);
        self.score_evaluations += out.scores_computed as u64;
        let mut batch = out.batch;
        debug_assert!(!batch.is_empty(), "scheduler idled with work pending");
        if batch.is_empty() {
            return;
        }
        let timing = batch_timing(&self.config.cost_model, &batch).expect("trace requests were validated");
        for (r, off) in batch.iter_mut().zip(&timing.prefill_offsets) {
            r.first_token_time = Some(now + off);
            if r.prompt_len < self.config.class_boundary {
                self.short_pending -= 1;
            } else {
                self.long_pending -= 1;
            }
        }
        let end = now + timing.total();
        self.busy_until = Some(end);
        self.busy_time += timing.total();
        if self.config.record_batches {
            self.batches.push(BatchRecord {
                start: now,
                end,
                primary: out.primary,
                ids: batch.iter().map(|r| r.id.clone()).collect(),
            });
        }
        self.in_flight = batch;
    }

    fn strategic_tick(&mut self) {
        self.next_strategic += self.config.strategic_interval;
        let (Some(params), Policy::Ewsjf(state)) = (self.strategic.as_ref(), &mut self.policy) else {
            return;
        };
        if self.strategic_window.is_empty() {
            return;
        }
        let mut lens: Vec<u32> = self.strategic_window.drain(..).collect();
        lens.sort_unstable();
        if let Ok(out) = refine_and_prune(&lens, params) {
            if state.adopt(out.partition.clone()).is_ok() {
                self.published = Some(out.partition);
            }
        }
    }

    fn online_tick(&mut self) {
        self.next_online += self.config.online_interval;
        let (Some(params), Some(base), Policy::Ewsjf(state)) =
            (self.strategic.as_ref(), self.published.as_ref(), &mut self.policy)
        else {
            return;
        };
        if self.online_window.is_empty() {
            return;
        }
        let recent: Vec<u32> = self.online_window.drain(..).collect();
        let adjusted = online_adjust(base, &recent, params.max_shift);
        if &adjusted != base && state.adopt(adjusted.clone()).is_ok() {
            self.published = Some(adjusted);
        }
    }

    /// Runs every remaining event.
    pub fn run_to_end(&mut self) {
        while self.step().is_some() {}
    }

    /// Runs to the end and assembles the report.
    pub fn finish(mut self) -> Result<SimulationOutcome> {
        self.run_to_end();
        let elapsed = if self.truncated {
            self.now
        } else {
            self.completed.iter().filter_map(|r| r.completion_time).fold(0.0, f64::max)
        };
        self.sample_until(elapsed, true);

        let mut metrics = compute_metrics(&self.completed, self.config.class_boundary, elapsed)?;
        let mut max_wait = metrics.max_wait;
        self.policy.get().for_each_pending(&mut |r: &Request| {
            if r.arrival_time <= elapsed {
                max_wait = max_wait.max(elapsed - r.arrival_time);
            }
        });
        for r in &self.in_flight {
            let first = r.first_token_time.unwrap_or(elapsed).min(elapsed);
            max_wait = max_wait.max(first - r.arrival_time);
        }
        let overrun = self.busy_until.map_or(0.0, |end| (end - elapsed).max(0.0));
        metrics.max_wait = max_wait;
        metrics.pending_at_end = (self.arrivals.len() - self.completed.len()) as u64;
        metrics.busy_fraction = if elapsed > 0.0 { (self.busy_time - overrun) / elapsed } else { 0.0 };
        metrics.backlog_trace = core::mem::take(&mut self.backlog);
        metrics.truncated = self.truncated;

        let partition = match &self.policy {
            Policy::Ewsjf(s) => Some(s.partition()),
            _ => None,
        };
        Ok(SimulationOutcome {
            metrics,
            partition,
            batches: self.batches,
            completed: self.completed,
            score_evaluations: self.score_evaluations,
        })
    }

    pub fn meta(&self) -> &MetaParams {
        &self.meta
    }
}

fn push_capped(window: &mut VecDeque<u32>, v: u32, cap: usize) {
    if window.len() == cap {
        window.pop_front();
    }
    window.push_back(v);
}

/// Simulates `trace` under `config` to completion (or the horizon).
pub fn run_simulation(
    trace: &RequestTrace,
    config: &EngineConfig,
    meta: &MetaParams,
    source: PartitionSource,
) -> Result<SimulationOutcome> {
    Simulation::new(trace, config.clone(), *meta, source)?.finish()
}
