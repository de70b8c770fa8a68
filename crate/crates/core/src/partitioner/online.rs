use alloc::vec::Vec;

use super::QueuePartition;

/// Nudges the interior boundaries of `partition` toward the recent traffic.
///
/// For every boundary shared by two contiguous queues, only the recent samples
/// inside those two queues are considered. The boundary's expected share of
/// left-hand samples is the queues' observed count ratio (or their width ratio
/// when neither has observations). When the share seen in `recent` departs from
/// it by more than sampling noise, the boundary moves toward the local quantile
/// at the expected share, by at most `max_shift` of the adjacent queue's width
/// (rounded down). All moves are computed from the input boundaries, so with
/// `max_shift < 0.5` no queue can collapse. `max_shift` outside `[0, 0.5)` is
/// clamped to that range.
///
/// Queue count, ordering and contiguity are preserved. Profiles are kept except
/// that each mean is clamped into its new interval.
pub fn online_adjust(partition: &QueuePartition, recent: &[u32], max_shift: f64) -> QueuePartition {
    let max_shift = if max_shift.is_finite() { max_shift.clamp(0.0, 0.499_999) } else { 0.0 };
    if recent.is_empty() || partition.len() < 2 || max_shift == 0.0 {
        return partition.clone();
    }
    let mut sorted = recent.to_vec();
    sorted.sort_unstable();

    let queues = partition.queues();
    let mut moves: Vec<(usize, u32)> = Vec::new();
    for (i, w) in queues.windows(2).enumerate() {
        let (l, r) = (&w[0], &w[1]);
        if l.max_len != r.min_len {
            continue;
        }
        let boundary = l.max_len;
        let lo = sorted.partition_point(|&x| x < l.min_len);
        let mid = sorted.partition_point(|&x| x < boundary);
        let hi = sorted.partition_point(|&x| x < r.max_len);
        let local = &sorted[lo..hi];
        let n = local.len();
        if n == 0 {
            continue;
        }
        let f = if l.count + r.count > 0 {
            l.count as f64 / (l.count + r.count) as f64
        } else {
            f64::from(l.width()) / f64::from(l.width() + r.width())
        };
        let nf = n as f64;
        let p = (mid - lo) as f64 / nf;
        let tolerance = 3.0 * libm::sqrt(f * (1.0 - f) / nf) + 1.0 / nf;
        if (p - f).abs() <= tolerance {
            continue;
        }
        let target = local_quantile(local, f);
        let down = libm::floor(max_shift * f64::from(l.width())) as u32;
        let up = libm::floor(max_shift * f64::from(r.width())) as u32;
        let moved = target.clamp(boundary - down, boundary + up);
        if moved != boundary {
            moves.push((i, moved));
        }
    }
    if moves.is_empty() {
        return partition.clone();
    }

    let mut out = partition.clone().into_queues();
    for (i, b) in moves {
        out[i].max_len = b;
        out[i + 1].min_len = b;
    }
    for q in &mut out {
        q.mean_len = q.mean_len.clamp(f64::from(q.min_len), f64::from(q.max_len - 1));
    }
    QueuePartition::new(out).expect("bounded shifts keep every interval non-empty")
}

/// Boundary `t` with about `f * n` of `sorted` below it, placed halfway
/// between the straddling samples.
fn local_quantile(sorted: &[u32], f: f64) -> u32 {
    let n = sorted.len();
    let k = (libm::round(f * n as f64) as usize).min(n);
    if k == 0 {
        return sorted[0];
    }
    if k == n {
        return sorted[n - 1].saturating_add(1);
    }
    let (a, b) = (sorted[k - 1], sorted[k]);
    if a == b {
        return b;
    }
    (((u64::from(a) + u64::from(b)) / 2) as u32).max(a + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitioner::{refine_and_prune, PartitionParams, QueueId, QueueSpec};
    use crate::workload::{generate_mixed_workload, WorkloadConfig};
    use alloc::vec;
    use proptest::prelude::*;

    fn two(count_l: u64, count_r: u64) -> QueuePartition {
        let mut l = QueueSpec::with_bounds(QueueId(0), 0, 100);
        let mut r = QueueSpec::with_bounds(QueueId(1), 100, 200);
        l.count = count_l;
        r.count = count_r;
        QueuePartition::new(vec![l, r]).unwrap()
    }

    fn boundaries(p: &QueuePartition) -> Vec<u32> {
        p.queues().iter().map(|q| q.max_len).collect()
    }

    #[test]
    fn empty_window_is_identity() {
        let p = two(10, 10);
        assert_eq!(online_adjust(&p, &[], 0.25), p);
    }

    #[test]
    fn shifted_traffic_moves_boundary_by_at_most_the_cap() {
        // equal counts expect an even split; all recent samples sit in 120..180
        let p = two(50, 50);
        let recent: Vec<u32> = (120..180).collect();
        let out = online_adjust(&p, &recent, 0.25);
        assert_eq!(boundaries(&out), vec![125, 200]);
        assert!(out.is_contiguous());
    }

    #[test]
    fn small_drift_inside_tolerance_is_ignored() {
        let p = two(50, 50);
        let mut recent: Vec<u32> = (0..100).step_by(2).collect();
        recent.extend((100..200).step_by(2));
        recent.push(95);
        assert_eq!(online_adjust(&p, &recent, 0.25), p);
    }

    #[test]
    fn window_inside_one_queue_only_moves_its_boundaries() {
        let qs: Vec<QueueSpec> = (0..5)
            .map(|i| QueueSpec { count: 100, ..QueueSpec::with_bounds(QueueId(i), i * 100, (i + 1) * 100) })
            .collect();
        let p = QueuePartition::new(qs).unwrap();
        let recent: Vec<u32> = (200..300).collect();
        let out = online_adjust(&p, &recent, 0.25);
        let before = boundaries(&p);
        let after = boundaries(&out);
        for i in [0, 3, 4] {
            assert_eq!(before[i], after[i], "boundary {i}");
        }
        assert_ne!(before[1], after[1]);
        assert_ne!(before[2], after[2]);
    }

    #[test]
    fn same_distribution_window_stays_near_identity() {
        let cfg = WorkloadConfig { total_requests: 20_000, rng_seed: 5, ..WorkloadConfig::default() };
        let base = generate_mixed_workload(&cfg).unwrap().sorted_prompt_lens();
        let p = refine_and_prune(&base, &PartitionParams::default()).unwrap().partition;
        let fresh = WorkloadConfig { rng_seed: 6, ..cfg };
        let recent = generate_mixed_workload(&fresh).unwrap().sorted_prompt_lens();
        let out = online_adjust(&p, &recent, 0.25);
        let mut moved = 0;
        for (i, w) in p.queues().windows(2).enumerate() {
            let shift = w[0].max_len.abs_diff(out.queues()[i].max_len);
            assert!(f64::from(shift) < 0.25 * f64::from(w[0].width().max(w[1].width())));
            moved += usize::from(shift > 0);
        }
        assert!(moved * 4 <= p.len(), "{moved} of {} boundaries moved", p.len() - 1);
    }

    #[test]
    fn local_quantile_midpoints() {
        assert_eq!(local_quantile(&[10, 20, 30, 40], 0.5), 25);
        assert_eq!(local_quantile(&[10, 11], 0.5), 11);
        assert_eq!(local_quantile(&[7, 7, 7], 0.5), 7);
        assert_eq!(local_quantile(&[10, 20], 0.0), 10);
        assert_eq!(local_quantile(&[10, 20], 1.0), 21);
    }

    proptest! {
        #[test]
        fn adjustment_preserves_partition_shape(
            bounds in proptest::collection::btree_set(1u32..5000, 2..20),
            counts in proptest::collection::vec(0u64..200, 20),
            recent in proptest::collection::vec(0u32..6000, 0..500),
            max_shift in 0.0..0.5f64,
        ) {
            let b: Vec<u32> = bounds.into_iter().collect();
            let qs: Vec<QueueSpec> = b
                .windows(2)
                .enumerate()
                .map(|(i, w)| QueueSpec { count: counts[i], ..QueueSpec::with_bounds(QueueId(i as u32), w[0], w[1]) })
                .collect();
            let p = QueuePartition::new(qs).unwrap();
            let out = online_adjust(&p, &recent, max_shift);
            prop_assert_eq!(out.len(), p.len());
            prop_assert!(out.is_contiguous());
            prop_assert_eq!(out.covers(), p.covers());
            for (a, q) in p.queues().iter().zip(out.queues()) {
                prop_assert_eq!(a.id, q.id);
                prop_assert!(q.min_len < q.max_len);
            }
            for (i, w) in p.queues().windows(2).enumerate() {
                let moved = w[0].max_len.abs_diff(out.queues()[i].max_len);
                let cap_l = (max_shift * f64::from(w[0].width())).floor() as u32;
                let cap_r = (max_shift * f64::from(w[1].width())).floor() as u32;
                prop_assert!(moved <= cap_l.max(cap_r));
            }
        }
    }
}
