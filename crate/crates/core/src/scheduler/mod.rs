//! Tactical scheduling: per-queue scoring, routing with bubble queues, batch
//! building, and the FCFS and greedy-SJF baselines.
//!
//! The score of the oldest request in queue `q` is
//!
//! ```text
//! score = qf * (w_base + w_urg * cs + w_fair * ln(b + 1))
//! cs    = W_t / C_prefill(b)
//! qf    = q_i / (b + 1)
//! ```
//!
//! where `b` is the head's prompt length, `W_t` its wait so far and `q_i` the
//! queue's 1-based position. The weights come from linear maps of the queue's
//! mean prompt length ([`weights_for_queue`]).

mod baseline;
mod state;

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::costmodel::CostModelParams;
use crate::partitioner::{QueueId, QueueSpec};
use crate::workload::Request;
use crate::{Error, Result};

pub use baseline::{FcfsScheduler, SjfScheduler};
pub use state::{SchedulerState, BUBBLE_ID_BASE};

/// Weights of the three score terms for one queue.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoringWeights {
    pub w_base: f64,
    pub w_urg: f64,
    pub w_fair: f64,
}

impl ScoringWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_base.is_finite() && self.w_urg.is_finite() && self.w_fair.is_finite()) {
            return Err(Error::Parameter("scoring weights must be finite".into()));
        }
        if self.w_fair < 0.0 {
            return Err(Error::Parameter("w_fair must be >= 0".into()));
        }
        Ok(())
    }
}

/// Meta-policy parameters: the linear weight maps plus the structural knobs
/// tuned alongside them.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MetaParams {
    pub a_u: f64,
    pub b_u: f64,
    pub a_f: f64,
    pub b_f: f64,
    pub a_b: f64,
    pub b_b: f64,
    /// Significance ratio handed to the partitioner.
    pub alpha: f64,
    /// Default bubble queue width, tokens.
    pub bubble_width: u32,
    /// A queue is removed once it has been empty for more than this many steps.
    pub empty_threshold: u32,
    pub max_queues: usize,
}

impl Default for MetaParams {
    fn default() -> Self {
        Self {
            a_u: 0.0,
            b_u: 1.0,
            a_f: 0.0,
            b_f: 0.1,
            a_b: 0.0,
            b_b: 1.0,
            alpha: 2.0,
            bubble_width: 64,
            empty_threshold: 100,
            max_queues: 32,
        }
    }
}

impl MetaParams {
    pub fn validate(&self) -> Result<()> {
        let maps = [self.a_u, self.b_u, self.a_f, self.b_f, self.a_b, self.b_b];
        if maps.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("meta-policy coefficients must be finite".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(Error::Config("alpha must be > 1".into()));
        }
        if self.bubble_width < 1 {
            return Err(Error::Config("bubble_width must be >= 1".into()));
        }
        if self.empty_threshold < 1 {
            return Err(Error::Config("empty_threshold must be >= 1".into()));
        }
        if self.max_queues < 1 {
            return Err(Error::Config("max_queues must be >= 1".into()));
        }
        Ok(())
    }
}

/// Capacity of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BatchBudget {
    pub max_requests: usize,
    /// Total prompt tokens per batch.
    pub max_tokens: u64,
}

impl Default for BatchBudget {
    fn default() -> Self {
        Self { max_requests: 32, max_tokens: 8192 }
    }
}

impl BatchBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_requests == 0 || self.max_tokens == 0 {
            return Err(Error::Config("batch budget limits must be positive".into()));
        }
        Ok(())
    }
}

/// Running fill level of a batch under construction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Fill {
    budget: BatchBudget,
    requests: usize,
    tokens: u64,
}

impl Fill {
    pub(crate) fn new(budget: BatchBudget) -> Self {
        Self { budget, requests: 0, tokens: 0 }
    }

    /// Whether a request of `prompt_len` tokens fits. The first request of a
    /// batch is always admitted so oversized prompts cannot deadlock.
    #[inline]
    pub(crate) fn admits(&self, prompt_len: u32) -> bool {
        self.requests == 0
            || (self.requests < self.budget.max_requests
                && self.tokens + u64::from(prompt_len) <= self.budget.max_tokens)
    }

    #[inline]
    pub(crate) fn add(&mut self, prompt_len: u32) {
        self.requests += 1;
        self.tokens += u64::from(prompt_len);
    }

    #[inline]
    pub(crate) fn is_full(&self) -> bool {
        self.requests >= self.budget.max_requests || self.tokens >= self.budget.max_tokens
    }
}

/// Weights for a queue with mean prompt length `mean_len`; each clamped at 0.
pub fn weights_for_queue(meta: &MetaParams, mean_len: f64) -> ScoringWeights {
    ScoringWeights {
        w_base: (meta.a_b * mean_len + meta.b_b).max(0.0),
        w_urg: (meta.a_u * mean_len + meta.b_u).max(0.0),
        w_fair: (meta.a_f * mean_len + meta.b_f).max(0.0),
    }
}

#[inline]
fn score_parts(b: u32, index: usize, wait: f64, weights: &ScoringWeights, cost: &CostModelParams) -> f64 {
    let bf = f64::from(b);
    let qf = index as f64 / (bf + 1.0);
    let cs = wait / cost.prefill(b);
    qf * (weights.w_base + weights.w_urg * cs + weights.w_fair * libm::log1p(bf))
}

/// Priority of `queue` given its oldest request `head` at time `now`.
pub fn score_queue(
    head: &Request,
    queue: &QueueSpec,
    weights: &ScoringWeights,
    now: f64,
    cost: &CostModelParams,
) -> Result<f64> {
    if now < head.arrival_time {
        return Err(Error::Contract(format!(
            "scoring {} at t={now} before its arrival at {}",
            head.id, head.arrival_time
        )));
    }
    if head.prompt_len < 1 {
        return Err(Error::Domain("prompt length must be >= 1".into()));
    }
    Ok(score_parts(head.prompt_len, queue.index, now - head.arrival_time, weights, cost))
}

/// Wait after which a head of `prompt_len` tokens in queue position `index`
/// reaches `target` score; `0` if it already starts at or above it.
///
/// Requires `w_urg > 0`, which makes the score strictly increasing and
/// unbounded in the wait.
pub fn wait_for_score(
    target: f64,
    index: usize,
    prompt_len: u32,
    weights: &ScoringWeights,
    cost: &CostModelParams,
) -> Result<f64> {
    if !(weights.w_urg > 0.0) {
        return Err(Error::Parameter("inversion needs w_urg > 0".into()));
    }
    if index < 1 || prompt_len < 1 || !target.is_finite() {
        return Err(Error::Domain("need index >= 1, prompt_len >= 1 and a finite target".into()));
    }
    let bf = f64::from(prompt_len);
    let qf = index as f64 / (bf + 1.0);
    let rest = weights.w_base + weights.w_fair * libm::log1p(bf);
    let w = cost.prefill(prompt_len) * (target / qf - rest) / weights.w_urg;
    Ok(w.max(0.0))
}

/// Result of one scheduling decision.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutcome {
    /// Requests in pull order; empty when nothing is pending.
    pub batch: Vec<Request>,
    /// Number of queue scores evaluated.
    pub scores_computed: usize,
    /// Queue the batch was built around, for queue-based policies.
    pub primary: Option<QueueId>,
}

/// Common interface of the scheduling policies driven by the simulator.
pub trait Scheduler {
    /// Accepts a newly arrived request at time `now`.
    fn enqueue(&mut self, request: Request, now: f64);
    /// Forms the next batch at time `now`, removing its requests.
    fn step(&mut self, now: f64) -> StepOutcome;
    fn pending(&self) -> usize;
    /// Visits every pending request.
    fn for_each_pending(&self, f: &mut dyn FnMut(&Request));
}

/// Policy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SchedulerKind {
    Ewsjf,
    Fcfs,
    Sjf,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [SchedulerKind::Ewsjf, SchedulerKind::Fcfs, SchedulerKind::Sjf];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchedulerKind::Ewsjf => "ewsjf",
            SchedulerKind::Fcfs => "fcfs",
            SchedulerKind::Sjf => "sjf",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ewsjf" => Ok(SchedulerKind::Ewsjf),
            "fcfs" => Ok(SchedulerKind::Fcfs),
            "sjf" => Ok(SchedulerKind::Sjf),
            other => Err(Error::Config(format!("unknown scheduler {other:?} (expected ewsjf, fcfs or sjf)"))),
        }
    }
}
