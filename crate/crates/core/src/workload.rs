//! Requests, synthetic mixed workloads, and trace statistics.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::partitioner::QueueId;
use crate::{Error, Result};

/// One inference request and its lifecycle timestamps (seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: String,
    /// Prompt length in tokens.
    pub prompt_len: u32,
    pub output_len: u32,
    pub arrival_time: f64,
    pub first_token_time: Option<f64>,
    pub completion_time: Option<f64>,
    pub assigned_queue: Option<QueueId>,
}

impl Request {
    /// Builds a not-yet-scheduled request, rejecting invariant violations.
    pub fn new(
        id: impl Into<String>,
        prompt_len: u32,
        output_len: u32,
        arrival_time: f64,
    ) -> Result<Self> {
        let request = Self {
            id: id.into(),
            prompt_len,
            output_len,
            arrival_time,
            first_token_time: None,
            completion_time: None,
            assigned_queue: None,
        };
        request.validate()?;
        Ok(request)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt_len < 1 {
            return Err(Error::Domain(format!("request {}: prompt_len must be >= 1", self.id)));
        }
        if self.output_len < 1 {
            return Err(Error::Domain(format!("request {}: output_len must be >= 1", self.id)));
        }
        if !self.arrival_time.is_finite() || self.arrival_time < 0.0 {
            return Err(Error::Domain(format!(
                "request {}: arrival_time must be finite and non-negative",
                self.id
            )));
        }
        if let Some(first) = self.first_token_time {
            if first < self.arrival_time {
                return Err(Error::Domain(format!(
                    "request {}: first token before arrival",
                    self.id
                )));
            }
            if let Some(done) = self.completion_time {
                if done < first {
                    return Err(Error::Domain(format!(
                        "request {}: completion before first token",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Time to first token, once the request has been scheduled.
    pub fn ttft(&self) -> Option<f64> {
        self.first_token_time.map(|t| t - self.arrival_time)
    }

    pub fn total_tokens(&self) -> u64 {
        u64::from(self.prompt_len) + u64::from(self.output_len)
    }
}

/// Inclusive `[min, max]` token-count range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "[u32; 2]", into = "[u32; 2]"))]
pub struct TokenRange {
    pub min: u32,
    pub max: u32,
}

impl TokenRange {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, len: u32) -> bool {
        (self.min..=self.max).contains(&len)
    }
}

impl From<[u32; 2]> for TokenRange {
    fn from([min, max]: [u32; 2]) -> Self {
        Self { min, max }
    }
}

impl From<TokenRange> for [u32; 2] {
    fn from(r: TokenRange) -> Self {
        [r.min, r.max]
    }
}

/// Parameters of the bimodal Poisson workload generator.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct WorkloadConfig {
    /// Requests per second.
    pub arrival_rate: f64,
    pub short_fraction: f64,
    pub short_len_range: TokenRange,
    pub long_len_range: TokenRange,
    pub short_output_range: TokenRange,
    pub long_output_range: TokenRange,
    pub total_requests: usize,
    pub rng_seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            arrival_rate: 20.0,
            short_fraction: 0.8,
            short_len_range: TokenRange::new(32, 256),
            long_len_range: TokenRange::new(1024, 4096),
            short_output_range: TokenRange::new(8, 64),
            long_output_range: TokenRange::new(128, 512),
            total_requests: 10_000,
            rng_seed: 7,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(Error::Config("arrival_rate must be a positive number".into()));
        }
        if !(0.0..=1.0).contains(&self.short_fraction) {
            return Err(Error::Config("short_fraction must lie in [0, 1]".into()));
        }
        if self.total_requests == 0 {
            return Err(Error::Config("total_requests must be positive".into()));
        }
        for (name, r) in [
            ("short_len_range", self.short_len_range),
            ("long_len_range", self.long_len_range),
            ("short_output_range", self.short_output_range),
            ("long_output_range", self.long_output_range),
        ] {
            if r.min < 1 || r.min > r.max {
                return Err(Error::Config(format!(
                    "{name} must satisfy 1 <= min <= max (got [{}, {}])",
                    r.min, r.max
                )));
            }
        }
        if self.short_len_range.max >= self.long_len_range.min {
            return Err(Error::Config(
                "short_len_range.max must be below long_len_range.min".into(),
            ));
        }
        Ok(())
    }

    /// Whether a prompt length was drawn from the short mode.
    pub fn is_short(&self, prompt_len: u32) -> bool {
        prompt_len <= self.short_len_range.max
    }
}

/// A sequence of requests ordered by arrival time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestTrace {
    requests: Vec<Request>,
}

impl RequestTrace {
    /// Wraps requests that are already in arrival order.
    pub fn new(requests: Vec<Request>) -> Result<Self> {
        for r in &requests {
            r.validate()?;
        }
        if requests
            .windows(2)
            .any(|w| w[1].arrival_time < w[0].arrival_time)
        {
            return Err(Error::Contract("trace arrivals must be non-decreasing".into()));
        }
        Ok(Self { requests })
    }

    /// Sorts requests by arrival time (stable) and reports how many inverted
    /// pairs the input contained.
    pub fn from_unsorted(mut requests: Vec<Request>) -> Result<(Self, u64)> {
        for r in &requests {
            r.validate()?;
        }
        let arrivals: Vec<f64> = requests.iter().map(|r| r.arrival_time).collect();
        let inversions = count_inversions(&arrivals);
        if inversions > 0 {
            requests.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
        }
        Ok((Self { requests }, inversions))
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn into_requests(self) -> Vec<Request> {
        self.requests
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Prompt lengths sorted ascending, the input shape the partitioner expects.
    pub fn sorted_prompt_lens(&self) -> Vec<u32> {
        let mut lens: Vec<u32> = self.requests.iter().map(|r| r.prompt_len).collect();
        lens.sort_unstable();
        lens
    }

    /// Arrival time of the last request, or 0 for an empty trace.
    pub fn last_arrival(&self) -> f64 {
        self.requests.last().map_or(0.0, |r| r.arrival_time)
    }
}

/// Number of pairs `i < j` with `values[i] > values[j]`, by merge counting.
fn count_inversions(values: &[f64]) -> u64 {
    fn sort_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
        let n = v.len();
        if n < 2 {
            return 0;
        }
        let mid = n / 2;
        let mut count = sort_count(&mut v[..mid], buf) + sort_count(&mut v[mid..], buf);
        buf.clear();
        let (mut i, mut j) = (0, mid);
        while i < mid && j < n {
            if v[j] < v[i] {
                count += (mid - i) as u64;
                buf.push(v[j]);
                j += 1;
            } else {
                buf.push(v[i]);
                i += 1;
            }
        }
        buf.extend_from_slice(&v[i..mid]);
        buf.extend_from_slice(&v[j..n]);
        v.copy_from_slice(buf);
        count
    }
    let mut v = values.to_vec();
    let mut buf = Vec::with_capacity(v.len());
    sort_count(&mut v, &mut buf)
}

/// Generates a bimodal mixed trace with Poisson arrivals.
///
/// Inter-arrival gaps are exponential with rate `arrival_rate`; each request is
/// short with probability `short_fraction`, and prompt and output lengths are
/// uniform within the selected mode's ranges. The output depends only on
/// `config` (including its seed).
pub fn generate_mixed_workload(config: &WorkloadConfig) -> Result<RequestTrace> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let gaps = Exp::new(config.arrival_rate)
        .map_err(|_| Error::Config("arrival_rate must be a positive number".into()))?;
    let width = digits(config.total_requests);
    let mut now = 0.0;
    let mut requests = Vec::with_capacity(config.total_requests);
    for i in 0..config.total_requests {
        now += gaps.sample(&mut rng);
        let short = rng.random_bool(config.short_fraction);
        let (lens, outs) = if short {
            (config.short_len_range, config.short_output_range)
        } else {
            (config.long_len_range, config.long_output_range)
        };
        let prompt_len = rng.random_range(lens.min..=lens.max);
        let output_len = rng.random_range(outs.min..=outs.max);
        requests.push(Request {
            id: format!("req-{i:0width$}"),
            prompt_len,
            output_len,
            arrival_time: now,
            first_token_time: None,
            completion_time: None,
            assigned_queue: None,
        });
    }
    Ok(RequestTrace { requests })
}

fn digits(n: usize) -> usize {
    let mut d = 1;
    let mut n = n.saturating_sub(1) / 10;
    while n > 0 {
        d += 1;
        n /= 10;
    }
    d.max(6)
}

/// One bin of the prompt-length histogram: `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistogramBin {
    pub lo: u32,
    pub hi: u32,
    pub count: u64,
}

/// Descriptive statistics of a trace's prompt lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadStats {
    pub count: usize,
    pub mean_prompt_len: f64,
    pub min_prompt_len: u32,
    pub max_prompt_len: u32,
    /// Fixed-width bins from the bin containing the minimum to the one
    /// containing the maximum, zero-count bins included.
    pub histogram: Vec<HistogramBin>,
}

impl WorkloadStats {
    /// Count of modes: maximal runs of non-empty bins.
    pub fn modes(&self) -> usize {
        let mut modes = 0;
        let mut in_run = false;
        for bin in &self.histogram {
            if bin.count > 0 && !in_run {
                modes += 1;
            }
            in_run = bin.count > 0;
        }
        modes
    }
}

pub fn trace_stats(trace: &RequestTrace, bin_width: u32) -> Result<WorkloadStats> {
    if trace.is_empty() {
        return Err(Error::EmptyInput("trace has no requests"));
    }
    if bin_width == 0 {
        return Err(Error::Parameter("histogram bin width must be positive".into()));
    }
    let reqs = trace.requests();
    let min = reqs.iter().map(|r| r.prompt_len).min().unwrap_or(0);
    let max = reqs.iter().map(|r| r.prompt_len).max().unwrap_or(0);
    let sum: u64 = reqs.iter().map(|r| u64::from(r.prompt_len)).sum();
    let first_bin = min / bin_width;
    let last_bin = max / bin_width;
    let mut histogram: Vec<HistogramBin> = (first_bin..=last_bin)
        .map(|b| HistogramBin {
            lo: b * bin_width,
            hi: b.saturating_mul(bin_width).saturating_add(bin_width),
            count: 0,
        })
        .collect();
    for r in reqs {
        histogram[(r.prompt_len / bin_width - first_bin) as usize].count += 1;
    }
    Ok(WorkloadStats {
        count: reqs.len(),
        mean_prompt_len: sum as f64 / reqs.len() as f64,
        min_prompt_len: min,
        max_prompt_len: max,
        histogram,
    })
}
