//! Policy search over [`MetaParams`].
//!
//! A trial replays a trace under one candidate and scores it with
//!
//! ```text
//! R = l1*C + l2*L - l3*S - l4*U
//! ```
//!
//! where `C` is queue homogeneity, `L` load balance, `S` queue count over a
//! budget and `U` the short-class p95 TTFT over a normalizer (see
//! [`RewardTerms`]). Candidates come from a seeded Latin hypercube for the
//! first trials and from expected improvement under a Gaussian-process
//! surrogate afterwards.

mod gp;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::engine::{run_simulation, EngineConfig, MetricsReport, PartitionSource};
use crate::partitioner::{PartitionParams, QueuePartition};
use crate::scheduler::MetaParams;
use crate::workload::RequestTrace;
use crate::{Error, Result};

/// Weights and normalizers of the trial reward.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RewardConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    /// Seconds of short-class p95 TTFT that count as one unit of latency penalty.
    pub u_norm: f64,
    /// Queue count that makes the sprawl term 1.
    pub queue_budget: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { lambda1: 1.0, lambda2: 1.0, lambda3: 0.5, lambda4: 2.0, u_norm: 10.0, queue_budget: 32 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let l = [self.lambda1, self.lambda2, self.lambda3, self.lambda4];
        if l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("reward weights must be finite and >= 0".into()));
        }
        if l.iter().all(|v| *v == 0.0) {
            return Err(Error::Config("at least one reward weight must be positive".into()));
        }
        if !(self.u_norm.is_finite() && self.u_norm > 0.0) {
            return Err(Error::Config("u_norm must be positive".into()));
        }
        if self.queue_budget < 1 {
            return Err(Error::Config("queue_budget must be >= 1".into()));
        }
        Ok(())
    }
}

/// The four reward components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RewardTerms {
    /// `1 - pooled within-queue variance / total variance` of served prompt
    /// lengths, in `[0, 1]`. A single queue scores 0 unless every length is
    /// identical, which counts as perfectly homogeneous.
    pub compactness: f64,
    /// `1 - coefficient of variation` of completed requests per queue, in `[0, 1]`.
    pub balance: f64,
    /// Queue count over the queue budget.
    pub sprawl: f64,
    /// Short-class p95 TTFT over `u_norm`.
    pub latency: f64,
}

impl RewardTerms {
    pub fn reward(&self, cfg: &RewardConfig) -> f64 {
        cfg.lambda1 * self.compactness + cfg.lambda2 * self.balance
            - cfg.lambda3 * self.sprawl
            - cfg.lambda4 * self.latency
    }
}

pub fn reward_terms(metrics: &MetricsReport, partition: &QueuePartition, cfg: &RewardConfig) -> RewardTerms {
    let compactness = if metrics.len_var <= 0.0 {
        if metrics.empty { 0.0 } else { 1.0 }
    } else if partition.len() <= 1 {
        0.0
    } else {
        (1.0 - metrics.within_queue_len_var / metrics.len_var).clamp(0.0, 1.0)
    };
    let loads: Vec<f64> = metrics.per_queue_load.values().map(|&c| c as f64).collect();
    let balance = if loads.is_empty() {
        0.0
    } else {
        let n = loads.len() as f64;
        let mean = loads.iter().sum::<f64>() / n;
        let sd = libm::sqrt(loads.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n);
        (1.0 - sd / mean).clamp(0.0, 1.0)
    };
    RewardTerms {
        compactness,
        balance,
        sprawl: partition.len() as f64 / cfg.queue_budget as f64,
        latency: metrics.short.ttft_p95 / cfg.u_norm,
    }
}

pub fn compute_reward(metrics: &MetricsReport, partition: &QueuePartition, cfg: &RewardConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(reward_terms(metrics, partition, cfg).reward(cfg))
}

/// Search box over the meta-parameters, each as `[lo, hi]`. The last three
/// dimensions are integers and are rounded.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ThetaBounds {
    pub a_u: [f64; 2],
    pub b_u: [f64; 2],
    pub a_f: [f64; 2],
    pub b_f: [f64; 2],
    pub a_b: [f64; 2],
    pub b_b: [f64; 2],
    pub alpha: [f64; 2],
    pub bubble_width: [f64; 2],
    pub empty_threshold: [f64; 2],
    pub max_queues: [f64; 2],
}

impl Default for ThetaBounds {
    fn default() -> Self {
        Self {
            a_u: [-0.01, 0.01],
            b_u: [0.0, 5.0],
            a_f: [-0.01, 0.01],
            b_f: [0.0, 5.0],
            a_b: [-0.01, 0.01],
            b_b: [0.0, 5.0],
            alpha: [1.05, 5.0],
            bubble_width: [16.0, 512.0],
            empty_threshold: [5.0, 200.0],
            max_queues: [32.0, 32.0],
        }
    }
}

pub const THETA_DIMS: [&str; 10] = [
    "a_u",
    "b_u",
    "a_f",
    "b_f",
    "a_b",
    "b_b",
    "alpha",
    "bubble_width",
    "empty_threshold",
    "max_queues",
];

impl ThetaBounds {
    pub fn as_array(&self) -> [[f64; 2]; 10] {
        [
            self.a_u,
            self.b_u,
            self.a_f,
            self.b_f,
            self.a_b,
            self.b_b,
            self.alpha,
            self.bubble_width,
            self.empty_threshold,
            self.max_queues,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in THETA_DIMS.iter().zip(self.as_array()) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("bounds for {name} must be finite with lo <= hi")));
            }
        }
        let check = |name: &str, [lo, hi]: [f64; 2], min: f64, strict: bool| {
            let bad = if strict { lo <= min } else { lo < min };
            if bad || libm::floor(hi) < libm::ceil(lo).max(min) && name != "alpha" {
                return Err(Error::Config(format!("bounds for {name} leave no valid value")));
            }
            Ok(())
        };
        check("alpha", self.alpha, 1.0, true)?;
        check("bubble_width", self.bubble_width, 1.0, false)?;
        check("empty_threshold", self.empty_threshold, 1.0, false)?;
        check("max_queues", self.max_queues, 1.0, false)
    }

    /// Meta-parameters at the point `v` (one value per dimension), clamped
    /// into the box and rounded on integer dimensions.
    pub fn theta_at(&self, v: &[f64]) -> MetaParams {
        let b = self.as_array();
        let real = |i: usize| v[i].clamp(b[i][0], b[i][1]);
        let int = |i: usize| {
            let (lo, hi) = (libm::ceil(b[i][0]), libm::floor(b[i][1]));
            libm::round(v[i]).clamp(lo, hi.max(lo))
        };
        MetaParams {
            a_u: real(0),
            b_u: real(1),
            a_f: real(2),
            b_f: real(3),
            a_b: real(4),
            b_b: real(5),
            alpha: real(6),
            bubble_width: int(7) as u32,
            empty_threshold: int(8) as u32,
            max_queues: int(9) as usize,
        }
    }

    pub fn point_of(theta: &MetaParams) -> [f64; 10] {
        [
            theta.a_u,
            theta.b_u,
            theta.a_f,
            theta.b_f,
            theta.a_b,
            theta.b_b,
            theta.alpha,
            f64::from(theta.bubble_width),
            f64::from(theta.empty_threshold),
            theta.max_queues as f64,
        ]
    }
}

/// Knobs of the proposal strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SearchConfig {
    /// Space-filling trials before the surrogate is used.
    pub n_init: usize,
    /// Uniform random candidates scored by the acquisition per proposal.
    pub candidates: usize,
    /// Gaussian perturbations around each of the best observed points.
    pub local_candidates: usize,
    /// Standard deviation of the local perturbations, in unit-cube coordinates.
    pub local_scale: f64,
    /// Exploration margin of expected improvement, in standardized reward units.
    pub xi: f64,
    /// Replace the surrogate with uniform random proposals.
    pub random_search: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { n_init: 4, candidates: 2048, local_candidates: 128, local_scale: 0.05, xi: 0.01, random_search: false }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init < 1 || self.candidates < 1 {
            return Err(Error::Config("n_init and candidates must be >= 1".into()));
        }
        if !(self.local_scale.is_finite() && self.local_scale > 0.0 && self.xi.is_finite() && self.xi >= 0.0) {
            return Err(Error::Config("local_scale must be positive and xi >= 0".into()));
        }
        Ok(())
    }
}

fn rng_for(seed: u64, step: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (step as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Seeded Latin-hypercube design of `n` points in `[0, 1)^d`.
pub fn latin_hypercube(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut design = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            strata.swap(i, rng.random_range(0..=i));
        }
        for (i, s) in strata.into_iter().enumerate() {
            design[i][j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    design
}

/// Standardized mid-ranks of `values`. Only the ordering of rewards reaches
/// the surrogate, so one catastrophic trial cannot flatten the rest.
fn rank_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let mean = (n - 1) as f64 / 2.0;
    let sd = libm::sqrt(ranks.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64);
    let scale = if sd > 1e-12 { sd } else { 1.0 };
    ranks.iter().map(|r| (r - mean) / scale).collect()
}

/// Next point to evaluate inside `bounds`, given evaluated `points` and
/// their `rewards` (to be maximized).
///
/// The first `n_init` proposals are the rows of a Latin-hypercube design drawn
/// from `seed`. Later ones maximize expected improvement under a
/// Gaussian-process fit over seeded random and local candidates, with the
/// rewards replaced by their standardized ranks. Dimensions with `lo == hi`
/// are held fixed. The result is a deterministic function of the inputs.
pub fn suggest(
    points: &[Vec<f64>],
    rewards: &[f64],
    bounds: &[[f64; 2]],
    search: &SearchConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    search.validate()?;
    if points.len() != rewards.len() {
        return Err(Error::Parameter("points and rewards differ in length".into()));
    }
    if bounds.iter().any(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::Parameter("bounds must be finite with lo <= hi".into()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::Parameter("rewards must be finite".into()));
    }
    let active: Vec<usize> = (0..bounds.len()).filter(|&i| bounds[i][0] < bounds[i][1]).collect();
    let to_point = |u: &[f64]| -> Vec<f64> {
        let mut p: Vec<f64> = bounds.iter().map(|b| b[0]).collect();
        for (k, &i) in active.iter().enumerate() {
            p[i] = bounds[i][0] + u[k].clamp(0.0, 1.0) * (bounds[i][1] - bounds[i][0]);
        }
        p
    };
    if active.is_empty() {
        return Ok(to_point(&[]));
    }
    let d = active.len();
    let n = points.len();
    if n < search.n_init {
        let design = latin_hypercube(search.n_init, d, seed);
        return Ok(to_point(&design[n]));
    }
    let mut rng = rng_for(seed, n);
    if search.random_search {
        let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        return Ok(to_point(&u));
    }

    let unit: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            active
                .iter()
                .map(|&i| ((p[i] - bounds[i][0]) / (bounds[i][1] - bounds[i][0])).clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    let y = rank_scores(rewards);
    let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut candidates: Vec<Vec<f64>> = (0..search.candidates)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    for &i in order.iter().take(3) {
        for _ in 0..search.local_candidates {
            let c = unit[i]
                .iter()
                .map(|&u| {
                    let z: f64 = rng.sample(StandardNormal);
                    (u + search.local_scale * z).clamp(0.0, 1.0)
                })
                .collect();
            candidates.push(c);
        }
    }

    let Some(gp) = gp::Gp::fit(&unit, &y) else {
        return Ok(to_point(&candidates[0]));
    };
    let mut pick = 0;
    let mut pick_ei = f64::NEG_INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let (m, s) = gp.predict(c);
        let ei = gp::expected_improvement(m, s, best, search.xi);
        if ei > pick_ei {
            pick_ei = ei;
            pick = i;
        }
    }
    let _ = gp.lengthscale();
    Ok(to_point(&candidates[pick]))
}

/// One evaluated candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub theta: MetaParams,
    pub reward: f64,
    pub terms: RewardTerms,
    pub metrics: MetricsReport,
}

/// Next meta-parameters to try given the trials so far.
pub fn propose_next(
    history: &[TrialRecord],
    bounds: &ThetaBounds,
    search: &SearchConfig,
    seed: u64,
) -> Result<MetaParams> {
    bounds.validate()?;
    let points: Vec<Vec<f64>> = history.iter().map(|t| ThetaBounds::point_of(&t.theta).to_vec()).collect();
    let rewards: Vec<f64> = history.iter().map(|t| t.reward).collect();
    let v = suggest(&points, &rewards, &bounds.as_array(), search, seed)?;
    Ok(bounds.theta_at(&v))
}

/// Result of [`run_meta_loop`].
#[derive(Debug, Clone, PartialEq)]
pub struct MetaLoopOutcome {
    pub best: MetaParams,
    pub best_reward: f64,
    /// Best reward seen up to and including each trial.
    pub best_so_far: Vec<f64>,
    pub trials: Vec<TrialRecord>,
}

/// Cumulative maximum.
pub fn best_so_far(rewards: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    rewards
        .iter()
        .map(|&r| {
            best = best.max(r);
            best
        })
        .collect()
}

/// Everything a meta-optimization run needs besides the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaLoopConfig {
    pub engine: EngineConfig,
    pub partition: PartitionParams,
    pub bounds: ThetaBounds,
    pub reward: RewardConfig,
    pub search: SearchConfig,
    pub trials: usize,
    pub seed: u64,
}

/// Runs `trials` full simulations of `trace`, each under the next proposed
/// meta-parameters, and returns the best one with the convergence curve.
pub fn run_meta_loop(trace: &RequestTrace, cfg: &MetaLoopConfig) -> Result<MetaLoopOutcome> {
    optimize(cfg, |theta| {
        let source = PartitionSource::Strategic { initial: None, params: cfg.partition };
        let out = run_simulation(trace, &cfg.engine, theta, source)?;
        let partition = out.partition.unwrap_or_default();
        Ok((reward_terms(&out.metrics, &partition, &cfg.reward), out.metrics))
    })
}

/// The meta loop with a caller-supplied trial evaluator.
pub fn optimize<F>(cfg: &MetaLoopConfig, mut evaluate: F) -> Result<MetaLoopOutcome>
where
    F: FnMut(&MetaParams) -> Result<(RewardTerms, MetricsReport)>,
{
    cfg.reward.validate()?;
    cfg.bounds.validate()?;
    cfg.search.validate()?;
    if cfg.trials < cfg.search.n_init {
        return Err(Error::Config(format!(
            "trials ({}) must be at least n_init ({})",
            cfg.trials, cfg.search.n_init
        )));
    }
    let mut history: Vec<TrialRecord> = Vec::with_capacity(cfg.trials);
    for i in 0..cfg.trials {
        let theta = propose_next(&history, &cfg.bounds, &cfg.search, cfg.seed)?;
        let (terms, metrics) = evaluate(&theta)?;
        history.push(TrialRecord { trial_index: i, theta, reward: terms.reward(&cfg.reward), terms, metrics });
    }
    let rewards: Vec<f64> = history.iter().map(|t| t.reward).collect();
    let curve = best_so_far(&rewards);
    let best_at = history
        .iter()
        .enumerate()
        .fold(0, |b, (i, t)| if t.reward > history[b].reward { i } else { b });
    Ok(MetaLoopOutcome {
        best: history[best_at].theta,
        best_reward: history[best_at].reward,
        best_so_far: curve,
        trials: history,
    })
}
