use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use super::{BatchBudget, Fill, Scheduler, StepOutcome};
use crate::partitioner::QueueId;
use crate::workload::Request;

/// Single global FIFO.
#[derive(Debug, Clone)]
pub struct FcfsScheduler {
    budget: BatchBudget,
    fifo: VecDeque<Request>,
}

impl FcfsScheduler {
    pub fn new(budget: BatchBudget) -> Self {
        Self { budget, fifo: VecDeque::new() }
    }
}

impl Scheduler for FcfsScheduler {
    fn enqueue(&mut self, mut request: Request, _now: f64) {
        request.assigned_queue = Some(QueueId(0));
        self.fifo.push_back(request);
    }

    fn step(&mut self, _now: f64) -> StepOutcome {
        let mut fill = Fill::new(self.budget);
        let mut batch = Vec::new();
        while let Some(head) = self.fifo.front() {
            if !fill.admits(head.prompt_len) {
                break;
            }
            fill.add(head.prompt_len);
            batch.extend(self.fifo.pop_front());
        }
        let primary = (!batch.is_empty()).then_some(QueueId(0));
        StepOutcome { batch, scores_computed: 0, primary }
    }

    fn pending(&self) -> usize {
        self.fifo.len()
    }

    fn for_each_pending(&self, f: &mut dyn FnMut(&Request)) {
        self.fifo.iter().for_each(f);
    }
}

/// Greedy shortest-prompt-first; equal lengths are served in arrival order.
#[derive(Debug, Clone)]
pub struct SjfScheduler {
    budget: BatchBudget,
    seq: u64,
    pending: BTreeMap<(u32, u64), Request>,
}

impl SjfScheduler {
    pub fn new(budget: BatchBudget) -> Self {
        Self { budget, seq: 0, pending: BTreeMap::new() }
    }
}

impl Scheduler for SjfScheduler {
    fn enqueue(&mut self, mut request: Request, _now: f64) {
        request.assigned_queue = Some(QueueId(0));
        self.pending.insert((request.prompt_len, self.seq), request);
        self.seq += 1;
    }

    fn step(&mut self, _now: f64) -> StepOutcome {
        let mut fill = Fill::new(self.budget);
        let mut batch = Vec::new();
        while let Some(entry) = self.pending.first_entry() {
            if !fill.admits(entry.key().0) {
                break;
            }
            fill.add(entry.key().0);
            batch.push(entry.remove());
        }
        let primary = (!batch.is_empty()).then_some(QueueId(0));
        StepOutcome { batch, scores_computed: 0, primary }
    }

    fn pending(&self) -> usize {
        self.pending.len()
    }

    fn for_each_pending(&self, f: &mut dyn FnMut(&Request)) {
        self.pending.values().for_each(f);
    }
}
