use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use super::{check_sorted, distinct_count};
use crate::{Error, Result};

/// Weighted distinct values with prefix sums, shifted by the first value.
struct Prefix {
    starts: Vec<usize>,
    w: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Prefix {
    fn new(sorted: &[u32]) -> Self {
        let base = f64::from(sorted[0]);
        let mut starts = Vec::new();
        let (mut w, mut s1, mut s2) = (vec![0.0], vec![0.0], vec![0.0]);
        let mut i = 0;
        while i < sorted.len() {
            let v = sorted[i];
            let j = i + sorted[i..].partition_point(|&x| x == v);
            let x = f64::from(v) - base;
            let c = (j - i) as f64;
            starts.push(i);
            w.push(w[w.len() - 1] + c);
            s1.push(s1[s1.len() - 1] + c * x);
            s2.push(s2[s2.len() - 1] + c * x * x);
            i = j;
        }
        starts.push(sorted.len());
        Self { starts, w, s1, s2 }
    }

    fn len(&self) -> usize {
        self.starts.len() - 1
    }

    /// Sum of squared deviations of distinct values `a..=b`.
    #[inline]
    fn cost(&self, a: usize, b: usize) -> f64 {
        let w = self.w[b + 1] - self.w[a];
        let s1 = self.s1[b + 1] - self.s1[a];
        let s2 = self.s2[b + 1] - self.s2[a];
        (s2 - s1 * s1 / w).max(0.0)
    }
}

/// Exact 1-D k-means over a sorted sequence.
///
/// Returns `k` contiguous index ranges into `lengths` minimizing the total
/// within-cluster sum of squared deviations. Equal values never straddle a
/// cluster boundary. Solved by the contiguous-partition dynamic program with
/// divide-and-conquer over monotone split points, `O(k * m log m)` for `m`
/// distinct values; ties resolve to the leftmost split.
pub fn kmeans_1d(lengths: &[u32], k: usize) -> Result<Vec<Range<usize>>> {
    check_sorted(lengths)?;
    let distinct = distinct_count(lengths);
    if k == 0 || k > distinct {
        return Err(Error::Parameter(format!(
            "k = {k} must lie in 1..={distinct} (distinct values)"
        )));
    }
    let pre = Prefix::new(lengths);
    let m = pre.len();

    let mut prev: Vec<f64> = (0..m).map(|j| pre.cost(0, j)).collect();
    // split[c][j]: first distinct index of the last cluster when distinct
    // values 0..=j form c + 1 clusters.
    let mut split: Vec<Vec<usize>> = vec![vec![0; m]];
    for c in 1..k {
        let mut cur = vec![f64::INFINITY; m];
        let mut arg = vec![0usize; m];
        layer(&pre, &prev, &mut cur, &mut arg, c, c, m - 1, c, m - 1);
        prev = cur;
        split.push(arg);
    }

    let mut bounds = Vec::with_capacity(k);
    let mut j = m - 1;
    for c in (1..k).rev() {
        let t = split[c][j];
        bounds.push(t..j + 1);
        j = t - 1;
    }
    bounds.push(0..j + 1);
    bounds.reverse();
    Ok(bounds
        .into_iter()
        .map(|r| pre.starts[r.start]..pre.starts[r.end])
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn layer(
    pre: &Prefix,
    prev: &[f64],
    cur: &mut [f64],
    arg: &mut [usize],
    c: usize,
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
) {
    if lo > hi {
        return;
    }
    let mid = lo + (hi - lo) / 2;
    let mut best = f64::INFINITY;
    let mut best_t = opt_lo.max(c);
    for t in opt_lo.max(c)..=opt_hi.min(mid) {
        let v = prev[t - 1] + pre.cost(t, mid);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    cur[mid] = best;
    arg[mid] = best_t;
    if mid > lo {
        layer(pre, prev, cur, arg, c, lo, mid - 1, opt_lo, best_t);
    }
    layer(pre, prev, cur, arg, c, mid + 1, hi, best_t, opt_hi);
}

/// Total within-cluster sum of squared deviations of `clusters` over `values`.
pub fn within_sse(values: &[u32], clusters: &[Range<usize>]) -> f64 {
    clusters
        .iter()
        .map(|r| {
            let xs = &values[r.clone()];
            if xs.is_empty() {
                return 0.0;
            }
            let mean = xs.iter().map(|&x| f64::from(x)).sum::<f64>() / xs.len() as f64;
            xs.iter()
                .map(|&x| {
                    let d = f64::from(x) - mean;
                    d * d
                })
                .sum::<f64>()
        })
        .sum()
}
