use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::partitioner::QueueId;
use crate::workload::Request;
use crate::{Error, Result};

/// TTFT statistics of one request class.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassStats {
    pub count: u64,
    pub ttft_mean: f64,
    pub ttft_p95: f64,
}

/// Pending requests per class at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BacklogSample {
    pub time: f64,
    pub short_pending: u64,
    pub long_pending: u64,
}

/// Outcome statistics of one simulation. A request is short when its prompt
/// is below the class boundary.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub requests_completed: u64,
    /// Simulated seconds until the last completion (or the horizon when truncated).
    pub elapsed: f64,
    pub req_per_s: f64,
    /// Prompt plus output tokens of completed requests per second.
    pub tok_per_s: f64,
    pub ttft_mean: f64,
    pub ttft_p95: f64,
    pub short: ClassStats,
    pub long: ClassStats,
    /// Longest time any request waited for its first token, including
    /// requests still pending at the end.
    pub max_wait: f64,
    /// Requests not completed when the run stopped.
    pub pending_at_end: u64,
    /// Engine-busy seconds over elapsed.
    pub busy_fraction: f64,
    /// Pooled within-queue variance of completed prompt lengths.
    pub within_queue_len_var: f64,
    /// Variance of all completed prompt lengths.
    pub len_var: f64,
    pub per_queue_load: BTreeMap<QueueId, u64>,
    pub backlog_trace: Vec<BacklogSample>,
    pub truncated: bool,
    /// Set when nothing completed.
    pub empty: bool,
}

/// Nearest-rank percentile `p` (in percent, `1..=100`) of sorted values.
pub fn percentile_nearest_rank(sorted: &[f64], p: u32) -> Option<f64> {
    if sorted.is_empty() || p == 0 || p > 100 {
        return None;
    }
    let n = sorted.len();
    let rank = (p as usize * n).div_ceil(100).max(1);
    Some(sorted[rank - 1])
}

fn class_stats(mut ttfts: Vec<f64>) -> ClassStats {
    if ttfts.is_empty() {
        return ClassStats::default();
    }
    ttfts.sort_by(f64::total_cmp);
    ClassStats {
        count: ttfts.len() as u64,
        ttft_mean: ttfts.iter().sum::<f64>() / ttfts.len() as f64,
        ttft_p95: percentile_nearest_rank(&ttfts, 95).unwrap_or(0.0),
    }
}

/// Exact statistics over `completed`. Every request must carry its first-token
/// and completion times. An empty set gives a zeroed report with `empty` set.
pub fn compute_metrics(completed: &[Request], class_boundary: u32, elapsed: f64) -> Result<MetricsReport> {
    if !(elapsed.is_finite() && elapsed >= 0.0) {
        return Err(Error::Parameter("elapsed must be finite and >= 0".into()));
    }
    let mut all = Vec::with_capacity(completed.len());
    let (mut short, mut long) = (Vec::new(), Vec::new());
    let mut tokens = 0u64;
    let mut load: BTreeMap<QueueId, u64> = BTreeMap::new();
    let mut groups: BTreeMap<QueueId, (f64, f64, f64)> = BTreeMap::new();
    for r in completed {
        let (Some(ttft), Some(_)) = (r.ttft(), r.completion_time) else {
            return Err(Error::Contract(format!("request {} has no completion timestamps", r.id)));
        };
        all.push(ttft);
        if r.prompt_len < class_boundary {
            short.push(ttft);
        } else {
            long.push(ttft);
        }
        tokens += r.total_tokens();
        if let Some(q) = r.assigned_queue {
            *load.entry(q).or_default() += 1;
            let b = f64::from(r.prompt_len);
            let g = groups.entry(q).or_default();
            g.0 += 1.0;
            g.1 += b;
            g.2 += b * b;
        }
    }
    let n = completed.len() as u64;
    let max_wait = all.iter().copied().fold(0.0, f64::max);
    let overall = class_stats(all);

    let len_var = variance(completed.iter().map(|r| f64::from(r.prompt_len)));
    let within_queue_len_var = if completed.is_empty() {
        0.0
    } else {
        let sse: f64 = groups
            .values()
            .map(|&(c, s1, s2)| {
                let mean = s1 / c;
                (s2 - s1 * mean).max(0.0)
            })
            .sum();
        sse / n as f64
    };

    let rate = |x: f64| if elapsed > 0.0 { x / elapsed } else { 0.0 };
    Ok(MetricsReport {
        requests_completed: n,
        elapsed,
        req_per_s: rate(n as f64),
        tok_per_s: rate(tokens as f64),
        ttft_mean: overall.ttft_mean,
        ttft_p95: overall.ttft_p95,
        short: class_stats(short),
        long: class_stats(long),
        max_wait,
        pending_at_end: 0,
        busy_fraction: 0.0,
        within_queue_len_var,
        len_var,
        per_queue_load: load,
        backlog_trace: Vec::new(),
        truncated: false,
        empty: n == 0,
    })
}

fn variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = xs.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64
}
