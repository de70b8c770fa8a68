use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use super::{score_parts, weights_for_queue, BatchBudget, Fill, MetaParams, Scheduler, ScoringWeights, StepOutcome};
use crate::costmodel::CostModelParams;
use crate::partitioner::{QueueId, QueuePartition, QueueSpec};
use crate::workload::Request;
use crate::{Error, Result};

/// Queue ids at or above this value are reserved for bubble queues.
pub const BUBBLE_ID_BASE: u32 = 1 << 31;

#[derive(Debug, Clone)]
struct Slot {
    spec: QueueSpec,
    weights: ScoringWeights,
    /// `(enqueue sequence number, request)` in arrival order.
    fifo: VecDeque<(u64, Request)>,
}

/// The EWSJF tactical scheduler: one FIFO per prompt-length queue.
#[derive(Debug, Clone)]
pub struct SchedulerState {
    slots: Vec<Slot>,
    meta: MetaParams,
    budget: BatchBudget,
    cost: CostModelParams,
    clock: f64,
    seq: u64,
    next_bubble: u32,
    pending: usize,
}

fn check_ids(partition: &QueuePartition) -> Result<()> {
    match partition.queues().iter().find(|q| q.id.0 >= BUBBLE_ID_BASE) {
        Some(q) => Err(Error::Contract(format!("queue id {} is in the reserved bubble range", q.id.0))),
        None => Ok(()),
    }
}

impl SchedulerState {
    pub fn new(
        partition: QueuePartition,
        meta: MetaParams,
        budget: BatchBudget,
        cost: CostModelParams,
    ) -> Result<Self> {
        meta.validate()?;
        budget.validate()?;
        cost.validate()?;
        check_ids(&partition)?;
        let slots = partition
            .into_queues()
            .into_iter()
            .map(|spec| Slot { weights: weights_for_queue(&meta, spec.mean_len), spec, fifo: VecDeque::new() })
            .collect();
        Ok(Self { slots, meta, budget, cost, clock: 0.0, seq: 0, next_bubble: 0, pending: 0 })
    }

    pub fn meta(&self) -> &MetaParams {
        &self.meta
    }

    pub fn budget(&self) -> BatchBudget {
        self.budget
    }

    /// Time of the latest step.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn queues(&self) -> impl ExactSizeIterator<Item = &QueueSpec> + '_ {
        self.slots.iter().map(|s| &s.spec)
    }

    pub fn queue_count(&self) -> usize {
        self.slots.len()
    }

    /// Snapshot of the current queues, bubbles included.
    pub fn partition(&self) -> QueuePartition {
        QueuePartition::new(self.slots.iter().map(|s| s.spec.clone()).collect())
            .expect("scheduler queues stay ordered and disjoint")
    }

    pub fn weights(&self, id: QueueId) -> Option<ScoringWeights> {
        self.slots.iter().find(|s| s.spec.id == id).map(|s| s.weights)
    }

    /// Pending requests of queue `id` in FIFO order.
    pub fn queued(&self, id: QueueId) -> Option<impl Iterator<Item = &Request> + '_> {
        let slot = self.slots.iter().find(|s| s.spec.id == id)?;
        Some(slot.fifo.iter().map(|(_, r)| r))
    }

    /// Replaces the meta-policy and recomputes every queue's weights.
    pub fn set_meta(&mut self, meta: MetaParams) -> Result<()> {
        meta.validate()?;
        self.meta = meta;
        for s in &mut self.slots {
            s.weights = weights_for_queue(&meta, s.spec.mean_len);
        }
        Ok(())
    }

    fn renumber(&mut self) {
        for (i, s) in self.slots.iter_mut().enumerate() {
            s.spec.index = i + 1;
        }
    }

    fn position_of(&self, len: u32) -> (usize, bool) {
        let i = self.slots.partition_point(|s| s.spec.max_len <= len);
        (i, i < self.slots.len() && self.slots[i].spec.contains(len))
    }

    /// Queue for a prompt of `len` tokens that no queue contains: a neighbour
    /// within the 10% tolerance, or else a new bubble queue in the gap.
    /// Missing neighbours (below or above the covered range) are treated as
    /// an open boundary at 0 or `u32::MAX`.
    pub fn create_bubble_queue(&mut self, len: u32) -> QueueId {
        let pos = self.bubble_position(len);
        self.slots[pos].spec.id
    }

    fn bubble_position(&mut self, len: u32) -> usize {
        let (i, inside) = self.position_of(len);
        if inside {
            return i;
        }
        let left = i.checked_sub(1);
        let right = (i < self.slots.len()).then_some(i);
        let l = u64::from(len);
        if let Some(p) = left {
            if 10 * l <= 11 * u64::from(self.slots[p].spec.max_len) {
                return p;
            }
        }
        if let Some(p) = right {
            if 10 * l >= 9 * u64::from(self.slots[p].spec.min_len) {
                return p;
            }
        }
        let lower = left.map_or(0, |p| self.slots[p].spec.max_len);
        let upper = right.map_or(u32::MAX, |p| self.slots[p].spec.min_len);
        let range = self.meta.bubble_width.min(upper - lower);
        let new_min = len.saturating_sub(range / 2).max(lower);
        let new_max = len.saturating_add(range - range / 2).min(upper);
        let id = QueueId(BUBBLE_ID_BASE + self.next_bubble);
        self.next_bubble += 1;
        let mut spec = QueueSpec::with_bounds(id, new_min, new_max);
        spec.is_bubble = true;
        let weights = weights_for_queue(&self.meta, spec.mean_len);
        self.slots.insert(i, Slot { spec, weights, fifo: VecDeque::new() });
        self.renumber();
        i
    }

    fn push(&mut self, seq: u64, mut request: Request) -> QueueId {
        let pos = self.bubble_position(request.prompt_len);
        let slot = &mut self.slots[pos];
        request.assigned_queue = Some(slot.spec.id);
        slot.spec.empty_count = 0;
        slot.fifo.push_back((seq, request));
        self.pending += 1;
        slot.spec.id
    }

    /// Appends `request` to the queue whose interval contains its prompt
    /// length, creating a bubble queue when it falls in a gap.
    pub fn route(&mut self, request: Request) -> QueueId {
        let seq = self.seq;
        self.seq += 1;
        self.push(seq, request)
    }

    /// One tactical decision at time `now`: score every non-empty queue by its
    /// head, age and prune empty queues, then fill a batch from the best queue
    /// (lowest index on ties) and backfill from its neighbours, nearest first,
    /// lower side before upper.
    pub fn tactical_step(&mut self, now: f64) -> StepOutcome {
        self.clock = now;
        let mut best: Option<(QueueId, f64)> = None;
        let mut scores = 0;
        let mut prune = false;
        for s in &mut self.slots {
            match s.fifo.front() {
                Some((_, head)) => {
                    s.spec.empty_count = 0;
                    let wait = now - head.arrival_time;
                    debug_assert!(wait >= 0.0, "request {} scored before arrival", head.id);
                    let score = score_parts(head.prompt_len, s.spec.index, wait, &s.weights, &self.cost);
                    scores += 1;
                    if best.map_or(true, |(_, b)| score > b) {
                        best = Some((s.spec.id, score));
                    }
                }
                None => {
                    s.spec.empty_count = s.spec.empty_count.saturating_add(1);
                    prune |= s.spec.empty_count > self.meta.empty_threshold;
                }
            }
        }
        if prune {
            let limit = self.meta.empty_threshold;
            self.slots.retain(|s| !s.fifo.is_empty() || s.spec.empty_count <= limit);
            self.renumber();
        }
        let Some((primary, _)) = best else {
            return StepOutcome { batch: Vec::new(), scores_computed: scores, primary: None };
        };
        let p = self.slots.iter().position(|s| s.spec.id == primary).expect("primary queue is non-empty");

        let mut fill = Fill::new(self.budget);
        let mut batch = Vec::new();
        self.pull(p, &mut fill, &mut batch);
        let n = self.slots.len();
        let mut d = 1;
        while !fill.is_full() && (d <= p || p + d < n) {
            if d <= p {
                self.pull(p - d, &mut fill, &mut batch);
            }
            if p + d < n && !fill.is_full() {
                self.pull(p + d, &mut fill, &mut batch);
            }
            d += 1;
        }
        self.pending -= batch.len();
        StepOutcome { batch, scores_computed: scores, primary: Some(primary) }
    }

    fn pull(&mut self, pos: usize, fill: &mut Fill, batch: &mut Vec<Request>) {
        let fifo = &mut self.slots[pos].fifo;
        while let Some((_, head)) = fifo.front() {
            if !fill.admits(head.prompt_len) {
                break;
            }
            fill.add(head.prompt_len);
            let (_, r) = fifo.pop_front().expect("front exists");
            batch.push(r);
        }
    }

    /// Switches to `partition`. Bubble queues that still sit entirely in a gap
    /// of the new partition are kept; every pending request is re-routed in
    /// its original arrival order.
    pub fn adopt(&mut self, partition: QueuePartition) -> Result<()> {
        check_ids(&partition)?;
        let mut pending: Vec<(u64, Request)> = Vec::with_capacity(self.pending);
        let mut kept: Vec<Slot> = Vec::new();
        for mut s in core::mem::take(&mut self.slots) {
            pending.extend(s.fifo.drain(..));
            if s.spec.is_bubble && !overlaps(&partition, &s.spec) {
                kept.push(s);
            }
        }
        let meta = self.meta;
        let mut slots: Vec<Slot> = partition
            .into_queues()
            .into_iter()
            .map(|mut spec| {
                spec.empty_count = 0;
                Slot { weights: weights_for_queue(&meta, spec.mean_len), spec, fifo: VecDeque::new() }
            })
            .collect();
        slots.extend(kept);
        slots.sort_by_key(|s| s.spec.min_len);
        self.slots = slots;
        self.renumber();
        self.pending = 0;
        pending.sort_by_key(|(seq, _)| *seq);
        for (seq, r) in pending {
            self.push(seq, r);
        }
        Ok(())
    }
}

fn overlaps(partition: &QueuePartition, q: &QueueSpec) -> bool {
    let qs = partition.queues();
    let i = qs.partition_point(|p| p.max_len <= q.min_len);
    i < qs.len() && qs[i].min_len < q.max_len
}

impl Scheduler for SchedulerState {
    fn enqueue(&mut self, request: Request, _now: f64) {
        self.route(request);
    }

    fn step(&mut self, now: f64) -> StepOutcome {
        self.tactical_step(now)
    }

    fn pending(&self) -> usize {
        self.pending
    }

    fn for_each_pending(&self, f: &mut dyn FnMut(&Request)) {
        for s in &self.slots {
            for (_, r) in &s.fifo {
                f(r);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;

    fn partition(bounds: &[(u32, u32)]) -> QueuePartition {
        QueuePartition::new(
            bounds
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| QueueSpec::with_bounds(QueueId(i as u32), a, b))
                .collect(),
        )
        .unwrap()
    }

    fn state(bounds: &[(u32, u32)], meta: MetaParams, budget: BatchBudget) -> SchedulerState {
        SchedulerState::new(partition(bounds), meta, budget, CostModelParams::default()).unwrap()
    }

    fn roomy() -> BatchBudget {
        BatchBudget { max_requests: 64, max_tokens: 1 << 20 }
    }

    fn req(id: &str, len: u32, t: f64) -> Request {
        Request::new(id, len, 1, t).unwrap()
    }

    fn ids(batch: &[Request]) -> Vec<String> {
        batch.iter().map(|r| r.id.clone()).collect()
    }

    fn bounds_of(s: &SchedulerState) -> Vec<(u32, u32)> {
        s.queues().map(|q| (q.min_len, q.max_len)).collect()
    }

    #[test]
    fn routes_by_half_open_interval() {
        let mut s = state(&[(0, 100), (100, 500)], MetaParams::default(), roomy());
        assert_eq!(s.route(req("a", 50, 0.0)), QueueId(0));
        assert_eq!(s.route(req("b", 100, 0.0)), QueueId(1));
        assert_eq!(s.pending(), 2);
    }

    #[test]
    fn gap_request_opens_a_bubble() {
        let meta = MetaParams { bubble_width: 40, ..MetaParams::default() };
        let mut s = state(&[(0, 100), (200, 500)], meta, roomy());
        let id = s.route(req("g", 150, 0.0));
        assert!(id.0 >= BUBBLE_ID_BASE);
        assert_eq!(bounds_of(&s), vec![(0, 100), (130, 170), (200, 500)]);
        let idx: Vec<usize> = s.queues().map(|q| q.index).collect();
        assert_eq!(idx, vec![1, 2, 3]);
        assert!(s.queues().nth(1).unwrap().is_bubble);
        // a second request in the same bubble reuses it
        assert_eq!(s.route(req("h", 160, 0.0)), id);
    }

    #[test]
    fn tolerance_bands_join_neighbours_without_widening() {
        let meta = MetaParams { bubble_width: 40, ..MetaParams::default() };
        let mut s = state(&[(0, 100), (200, 500)], meta, roomy());
        assert_eq!(s.create_bubble_queue(105), QueueId(0));
        assert_eq!(s.create_bubble_queue(185), QueueId(1));
        assert_eq!(bounds_of(&s), vec![(0, 100), (200, 500)]);
    }

    #[test]
    fn requests_outside_the_covered_range() {
        let meta = MetaParams { bubble_width: 64, ..MetaParams::default() };
        let mut s = state(&[(100, 200)], meta, roomy());
        s.route(req("low", 10, 0.0));
        s.route(req("high", 1000, 0.0));
        assert_eq!(bounds_of(&s), vec![(0, 42), (100, 200), (968, 1032)]);
    }

    #[test]
    fn empty_state_creates_bubbles_everywhere() {
        let mut s = SchedulerState::new(
            QueuePartition::default(),
            MetaParams::default(),
            roomy(),
            CostModelParams::default(),
        )
        .unwrap();
        s.route(req("a", 500, 0.0));
        assert_eq!(s.queue_count(), 1);
        assert_eq!(ids(&s.tactical_step(1.0).batch), vec!["a"]);
    }

    #[test]
    fn all_empty_step_ages_every_queue() {
        let mut s = state(&[(0, 100), (100, 200)], MetaParams::default(), roomy());
        let out = s.tactical_step(0.0);
        assert!(out.batch.is_empty() && out.primary.is_none());
        assert!(s.queues().all(|q| q.empty_count == 1));
    }

    #[test]
    fn empty_queues_are_removed_after_the_threshold() {
        let meta = MetaParams { empty_threshold: 2, ..MetaParams::default() };
        let mut s = state(&[(0, 100), (100, 200)], meta, roomy());
        for t in 0..3 {
            s.route(req("x", 50, f64::from(t)));
            s.tactical_step(f64::from(t));
        }
        assert_eq!(bounds_of(&s), vec![(0, 100)]);
        // the re-opened range now needs a bubble
        assert!(s.route(req("y", 150, 3.0)).0 >= BUBBLE_ID_BASE);
    }

    #[test]
    fn single_queue_fills_in_fifo_order() {
        let mut s = state(&[(0, 1000)], MetaParams::default(), roomy());
        for (i, id) in ["a", "b", "c"].iter().enumerate() {
            s.route(req(id, 100, i as f64 * 0.1));
        }
        let out = s.tactical_step(1.0);
        assert_eq!(ids(&out.batch), vec!["a", "b", "c"]);
        assert_eq!(out.scores_computed, 1);
        assert_eq!(s.pending(), 0);
    }

    #[test]
    fn backfill_tops_up_from_the_neighbour() {
        let budget = BatchBudget { max_requests: 8, max_tokens: 400 };
        let mut s = state(&[(0, 100), (100, 300)], MetaParams::default(), budget);
        s.route(req("s1", 50, 0.0));
        s.route(req("s2", 60, 0.0));
        s.route(req("big", 200, 0.0));
        // short queue wins: qf favours the short head at equal waits
        let out = s.tactical_step(1.0);
        assert_eq!(out.primary, Some(QueueId(0)));
        assert_eq!(ids(&out.batch), vec!["s1", "s2", "big"]);
    }

    #[test]
    fn backfill_alternates_outward_lower_first() {
        let budget = BatchBudget { max_requests: 3, max_tokens: 1 << 20 };
        let meta = MetaParams { b_u: 0.0, b_f: 0.0, b_b: 1.0, ..MetaParams::default() };
        let mut s = state(&[(0, 10), (10, 20), (20, 30), (30, 40)], meta, budget);
        s.route(req("q0", 5, 0.0));
        s.route(req("q1", 11, 0.0));
        s.route(req("q2", 21, 0.0));
        s.route(req("q3", 31, 0.0));
        // base-only scores: index/(b+1) = 1/6, 2/12, 3/22, 4/32; q0 and q1 tie, lowest index wins
        let out = s.tactical_step(0.0);
        assert_eq!(out.primary, Some(QueueId(0)));
        assert_eq!(ids(&out.batch), vec!["q0", "q1", "q2"]);

        let mut s = state(&[(0, 10), (10, 20), (20, 30), (30, 40)], meta, budget);
        s.route(req("q0", 5, 0.0));
        s.route(req("q1", 15, 0.0));
        s.route(req("q2", 21, 0.0));
        s.route(req("q3", 31, 0.0));
        // scores 1/6, 2/16, 3/22, 4/32: q0 primary; backfill q1 then q2
        assert_eq!(ids(&s.tactical_step(0.0).batch), vec!["q0", "q1", "q2"]);
    }

    #[test]
    fn backfill_from_the_middle_goes_down_then_up() {
        let budget = BatchBudget { max_requests: 3, max_tokens: 1 << 20 };
        let meta = MetaParams { b_u: 1.0, b_f: 0.0, b_b: 0.0, ..MetaParams::default() };
        let mut s = state(&[(0, 10), (10, 20), (20, 30), (30, 40)], meta, budget);
        s.route(req("q0", 5, 9.0));
        s.route(req("q1", 15, 9.0));
        s.route(req("q2", 25, 0.0));
        s.route(req("q3", 35, 9.0));
        let out = s.tactical_step(10.0);
        assert_eq!(out.primary, Some(QueueId(2)));
        assert_eq!(ids(&out.batch), vec!["q2", "q1", "q3"]);
    }

    #[test]
    fn long_waits_eventually_win() {
        let mut s = state(&[(0, 100), (100, 5000)], MetaParams::default(), BatchBudget { max_requests: 1, max_tokens: 1 });
        s.route(req("long", 4000, 0.0));
        s.route(req("short", 50, 999.9));
        assert_eq!(ids(&s.tactical_step(1000.0).batch), vec!["long"]);
    }

    #[test]
    fn adopt_reroutes_pending_and_keeps_gap_bubbles() {
        let meta = MetaParams { bubble_width: 40, ..MetaParams::default() };
        let mut s = state(&[(0, 100), (200, 500)], meta, roomy());
        s.route(req("a", 50, 0.0));
        s.route(req("g", 150, 0.1));
        s.route(req("b", 300, 0.2));
        s.route(req("c", 60, 0.3));
        s.adopt(partition(&[(0, 120), (200, 400), (400, 600)])).unwrap();
        assert_eq!(bounds_of(&s), vec![(0, 120), (130, 170), (200, 400), (400, 600)]);
        assert_eq!(s.pending(), 4);
        let first: Vec<String> = s.queued(QueueId(0)).unwrap().map(|r| r.id.clone()).collect();
        assert_eq!(first, vec!["a", "c"]);

        // a partition covering the bubble drops it
        s.adopt(partition(&[(0, 600)])).unwrap();
        assert_eq!(bounds_of(&s), vec![(0, 600)]);
        let all: Vec<String> = s.queued(QueueId(0)).unwrap().map(|r| r.id.clone()).collect();
        assert_eq!(all, vec!["a", "g", "b", "c"]);
    }

    #[test]
    fn reserved_ids_are_rejected() {
        let p = QueuePartition::new(vec![QueueSpec::with_bounds(QueueId(BUBBLE_ID_BASE), 0, 10)]).unwrap();
        let r = SchedulerState::new(p, MetaParams::default(), roomy(), CostModelParams::default());
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
