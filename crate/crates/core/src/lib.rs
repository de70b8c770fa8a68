//! Adaptive request-level scheduling for mixed-workload LLM inference.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithmic piece:
//!
//! * [`workload`]: synthetic Poisson mixed traces and trace statistics.
//! * [`partitioner`]: Refine-and-Prune prompt-length partitioning and the
//!   bounded online boundary adjustment.
//! * [`costmodel`]: prefill and batch execution cost estimates.
//! * [`scheduler`]: the tactical loop (routing, bubble queues, density-weighted
//!   scoring, batch building) plus FCFS and greedy-SJF baselines.
//! * [`engine`]: a discrete-event serving simulator producing [`engine::MetricsReport`]s.
//! * [`metaopt`]: the reward function and the Bayesian policy search over
//!   [`scheduler::MetaParams`].
//!
//! File formats and the command-line front end live in the `ewsjf` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod costmodel;
pub mod engine;
mod error;
pub mod metaopt;
pub mod partitioner;
pub mod scheduler;
pub mod workload;

pub use error::{Error, Result};
