use alloc::format;
use alloc::vec::Vec;

use super::{QueuePartition, QueueSpec};
use crate::{Error, Result};

/// Merge preference of two adjacent queues: combined density over the
/// distance between their mean lengths. Low values merge first.
pub fn scheduling_utility(left: &QueueSpec, right: &QueueSpec, epsilon: f64) -> Result<f64> {
    if left.index + 1 != right.index {
        return Err(Error::Contract(format!(
            "utility needs adjacent queues, got indices {} and {}",
            left.index, right.index
        )));
    }
    Ok(utility(left, right, epsilon))
}

#[inline]
fn utility(left: &QueueSpec, right: &QueueSpec, epsilon: f64) -> f64 {
    (left.density + right.density) / ((right.mean_len - left.mean_len).abs() + epsilon)
}

/// Combines two adjacent queues into one spanning both intervals. Counts and
/// densities add, the mean is member-weighted and the variance is pooled
/// including the spread between the two means.
fn merge(left: &QueueSpec, right: &QueueSpec) -> QueueSpec {
    let (cl, cr) = (left.count as f64, right.count as f64);
    let mut q = QueueSpec::with_bounds(left.id, left.min_len, right.max_len);
    q.count = left.count + right.count;
    q.is_bubble = left.is_bubble && right.is_bubble;
    if q.count > 0 {
        let n = cl + cr;
        let mean = (cl * left.mean_len + cr * right.mean_len) / n;
        let dl = left.mean_len - mean;
        let dr = right.mean_len - mean;
        q.mean_len = mean;
        q.len_variance =
            (cl * (left.len_variance + dl * dl) + cr * (right.len_variance + dr * dr)) / n;
        q.density = left.density + right.density;
    }
    q
}

/// Merges the adjacent pair with the lowest utility until at most
/// `max_queues` remain. Ties go to the leftmost pair; the merged queue keeps
/// the left id.
pub fn prune_partition(queues: Vec<QueueSpec>, max_queues: usize, epsilon: f64) -> Result<QueuePartition> {
    if max_queues < 1 {
        return Err(Error::Config("max_queues must be >= 1".into()));
    }
    let mut queues = QueuePartition::new(queues)?.into_queues();
    if queues.len() <= max_queues {
        return QueuePartition::new(queues);
    }
    let mut utils: Vec<f64> = queues.windows(2).map(|w| utility(&w[0], &w[1], epsilon)).collect();
    while queues.len() > max_queues {
        let mut at = 0;
        for (i, &u) in utils.iter().enumerate() {
            if u < utils[at] {
                at = i;
            }
        }
        let merged = merge(&queues[at], &queues[at + 1]);
        queues[at] = merged;
        queues.remove(at + 1);
        utils.remove(at);
        if at > 0 {
            utils[at - 1] = utility(&queues[at - 1], &queues[at], epsilon);
        }
        if at < utils.len() {
            utils[at] = utility(&queues[at], &queues[at + 1], epsilon);
        }
    }
    QueuePartition::new(queues)
}
