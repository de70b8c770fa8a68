//! Prompt-length queue partitioning.
//!
//! [`refine_and_prune`] runs the strategic pipeline on a sorted window of
//! prompt lengths:
//!
//! 1. coarse exact 1-D k-means ([`kmeans_1d`]),
//! 2. recursive gap splitting inside each coarse cluster ([`refine_cluster`]),
//! 3. boundary finalization, closing each gap between neighbouring
//!    sub-clusters at its midpoint (rounded down) so the result is contiguous,
//! 4. utility-driven merging down to the queue budget ([`prune_partition`]).
//!
//! [`online_adjust`] is the cheap variant that nudges boundaries of an existing
//! partition toward the recent traffic.

mod kmeans;
mod online;
mod prune;
mod refine;

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::{Error, Result};

pub use kmeans::{kmeans_1d, within_sse};
pub use online::online_adjust;
pub use prune::{prune_partition, scheduling_utility};
pub use refine::{refine_cluster, refine_cluster_traced, NodeOutcome, SplitNode};

/// Stable queue identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct QueueId(pub u32);

impl core::fmt::Display for QueueId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "q{}", self.0)
    }
}

/// One queue: the half-open prompt-length interval `[min_len, max_len)` and the
/// profile of the requests observed in it.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueSpec {
    pub id: QueueId,
    /// 1-based ordinal position, ascending by length.
    pub index: usize,
    pub min_len: u32,
    pub max_len: u32,
    /// Mean prompt length of the members.
    pub mean_len: f64,
    /// Requests of the observation window that fall in the interval. Kept
    /// separate from `count` so hand-built profiles can set it directly.
    pub density: f64,
    /// Number of observed members.
    pub count: u64,
    /// Population variance of member prompt lengths.
    pub len_variance: f64,
    /// Consecutive tactical steps this queue has been empty.
    pub empty_count: u32,
    pub is_bubble: bool,
}

impl QueueSpec {
    /// A queue with no observed members; the mean sits at the interval centre.
    pub fn with_bounds(id: QueueId, min_len: u32, max_len: u32) -> Self {
        Self {
            id,
            index: 0,
            min_len,
            max_len,
            mean_len: (f64::from(min_len) + f64::from(max_len)) / 2.0,
            density: 0.0,
            count: 0,
            len_variance: 0.0,
            empty_count: 0,
            is_bubble: false,
        }
    }

    /// Queue whose profile is computed from `members` (sorted, non-empty,
    /// all inside `[min_len, max_len)`).
    pub(crate) fn from_members(id: QueueId, min_len: u32, max_len: u32, members: &[u32]) -> Self {
        let mut q = Self::with_bounds(id, min_len, max_len);
        if !members.is_empty() {
            let n = members.len() as f64;
            let mean = members.iter().map(|&b| f64::from(b)).sum::<f64>() / n;
            let var = members
                .iter()
                .map(|&b| {
                    let d = f64::from(b) - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            q.count = members.len() as u64;
            q.mean_len = mean;
            q.len_variance = var;
            q.density = n;
        }
        q
    }

    #[inline]
    pub fn contains(&self, len: u32) -> bool {
        self.min_len <= len && len < self.max_len
    }

    pub fn width(&self) -> u32 {
        self.max_len - self.min_len
    }
}

/// Ordered, pairwise-disjoint queues. Partitions produced by
/// [`refine_and_prune`] are also contiguous.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueuePartition {
    queues: Vec<QueueSpec>,
}

impl QueuePartition {
    /// Validates ordering and disjointness and renumbers `index` to 1..=n.
    pub fn new(mut queues: Vec<QueueSpec>) -> Result<Self> {
        for q in &queues {
            if q.min_len >= q.max_len {
                return Err(Error::Contract(format!(
                    "queue {} has empty interval [{}, {})",
                    q.id, q.min_len, q.max_len
                )));
            }
        }
        for w in queues.windows(2) {
            if w[0].max_len > w[1].min_len {
                return Err(Error::Contract(format!(
                    "queues {} and {} overlap or are out of order",
                    w[0].id, w[1].id
                )));
            }
        }
        let mut ids: Vec<QueueId> = queues.iter().map(|q| q.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Contract("queue ids must be unique".into()));
        }
        for (i, q) in queues.iter_mut().enumerate() {
            q.index = i + 1;
        }
        Ok(Self { queues })
    }

    pub fn queues(&self) -> &[QueueSpec] {
        &self.queues
    }

    pub fn into_queues(self) -> Vec<QueueSpec> {
        self.queues
    }

    pub fn len(&self) -> usize {
        self.queues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.is_empty()
    }

    /// `[global_min, global_max)` spanned by the queues.
    pub fn covers(&self) -> Option<(u32, u32)> {
        Some((self.queues.first()?.min_len, self.queues.last()?.max_len))
    }

    pub fn is_contiguous(&self) -> bool {
        self.queues.windows(2).all(|w| w[0].max_len == w[1].min_len)
    }

    /// Position of the queue whose interval contains `len`.
    pub fn position_of(&self, len: u32) -> Option<usize> {
        let i = self.queues.partition_point(|q| q.max_len <= len);
        (i < self.queues.len() && self.queues[i].contains(len)).then_some(i)
    }

    /// Member-weighted mean of the per-queue variances (pooled within-queue
    /// variance) and the variance of all members together.
    pub fn variance_split(&self) -> (f64, f64) {
        let total: u64 = self.queues.iter().map(|q| q.count).sum();
        if total == 0 {
            return (0.0, 0.0);
        }
        let n = total as f64;
        let mean = self.queues.iter().map(|q| q.count as f64 * q.mean_len).sum::<f64>() / n;
        let within = self.queues.iter().map(|q| q.count as f64 * q.len_variance).sum::<f64>() / n;
        let between = self
            .queues
            .iter()
            .map(|q| {
                let d = q.mean_len - mean;
                q.count as f64 * d * d
            })
            .sum::<f64>()
            / n;
        (within, within + between)
    }
}

/// Tunables of the partitioning pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PartitionParams {
    /// Significance ratio: a gap splits when it exceeds `alpha` times the mean gap.
    pub alpha: f64,
    /// Clusters spanning fewer tokens than this are not split further.
    pub min_width: u32,
    pub max_queues: usize,
    /// Stabilizer in the utility denominator, in tokens.
    pub epsilon: f64,
    /// Number of coarse k-means clusters.
    pub coarse_k: usize,
    /// Largest online boundary move as a fraction of the adjacent queue width.
    pub max_shift: f64,
}

impl Default for PartitionParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            min_width: 8,
            max_queues: 32,
            epsilon: 1.0,
            coarse_k: 3,
            max_shift: 0.25,
        }
    }
}

impl PartitionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(Error::Config("alpha must be > 1".into()));
        }
        if self.min_width < 1 {
            return Err(Error::Config("min_width must be >= 1".into()));
        }
        if self.max_queues < 1 {
            return Err(Error::Config("max_queues must be >= 1".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        if self.coarse_k < 1 {
            return Err(Error::Config("coarse_k must be >= 1".into()));
        }
        if !(self.max_shift >= 0.0 && self.max_shift < 0.5) {
            return Err(Error::Config("max_shift must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Result of [`refine_and_prune`].
#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub partition: QueuePartition,
    /// The coarse cluster count actually used.
    pub coarse_k: usize,
    /// Set when the window had fewer distinct lengths than `params.coarse_k`.
    pub coarse_k_fallback: bool,
}

fn check_sorted(lengths: &[u32]) -> Result<()> {
    if lengths.is_empty() {
        return Err(Error::EmptyInput("no prompt lengths to partition"));
    }
    if lengths.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Parameter("prompt lengths must be sorted ascending".into()));
    }
    Ok(())
}

pub(crate) fn distinct_count(sorted: &[u32]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Stages 1 and 2 plus boundary finalization: the contiguous candidate queues
/// before any budget-driven merging. Returns the candidates and the coarse k used.
pub fn refine_candidates(lengths: &[u32], params: &PartitionParams) -> Result<(QueuePartition, usize)> {
    params.validate()?;
    check_sorted(lengths)?;
    let k = params.coarse_k.min(distinct_count(lengths));
    let mut pieces: Vec<Range<usize>> = Vec::new();
    for coarse in kmeans_1d(lengths, k)? {
        let offset = coarse.start;
        for sub in refine_cluster(&lengths[coarse], params.alpha, params.min_width) {
            pieces.push(sub.start + offset..sub.end + offset);
        }
    }
    let mut queues = Vec::with_capacity(pieces.len());
    let mut lower = lengths[0];
    for (i, piece) in pieces.iter().enumerate() {
        let hi = lengths[piece.end - 1];
        let upper = match pieces.get(i + 1) {
            Some(next) => {
                let lo_next = lengths[next.start];
                let mid = ((u64::from(hi) + u64::from(lo_next)) / 2) as u32;
                mid.max(hi + 1)
            }
            None => hi.saturating_add(1),
        };
        queues.push(QueueSpec::from_members(
            QueueId(i as u32),
            lower,
            upper,
            &lengths[piece.clone()],
        ));
        lower = upper;
    }
    Ok((QueuePartition::new(queues)?, k))
}

/// Full strategic pipeline producing a contiguous partition of at most
/// `params.max_queues` queues, with ids `0..n` in ascending order.
pub fn refine_and_prune(lengths: &[u32], params: &PartitionParams) -> Result<RefineOutcome> {
    let (candidates, k) = refine_candidates(lengths, params)?;
    let pruned = prune_partition(candidates.into_queues(), params.max_queues, params.epsilon)?;
    let queues = pruned
        .into_queues()
        .into_iter()
        .enumerate()
        .map(|(i, q)| QueueSpec { id: QueueId(i as u32), ..q })
        .collect();
    Ok(RefineOutcome {
        partition: QueuePartition::new(queues)?,
        coarse_k: k,
        coarse_k_fallback: k < params.coarse_k,
    })
}
