//! Prefill and batch execution cost estimates for the simulated engine.
//!
//! Prefill is quadratic in the prompt length, `c0 + c1*b + c2*b^2`. Within a
//! batch, the request at 0-based pull rank `r` pays `efficiency^r` of its
//! standalone prefill. Decoding runs for the longest output in the batch, and
//! each decode step costs `decode_per_token * (1 + efficiency*(n - 1))` for a
//! batch of `n` requests.

use alloc::format;
use alloc::vec::Vec;

use crate::workload::Request;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CostModelParams {
    /// Fixed prefill overhead, seconds.
    pub prefill_c0: f64,
    /// Seconds per prompt token.
    pub prefill_c1: f64,
    /// Seconds per squared prompt token (attention).
    pub prefill_c2: f64,
    /// Seconds per generated token for a batch of one.
    pub decode_per_token: f64,
    /// Marginal cost factor of each additional batched request, in (0, 1].
    pub batch_efficiency: f64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        Self {
            prefill_c0: 0.005,
            prefill_c1: 0.0002,
            prefill_c2: 1e-8,
            decode_per_token: 0.002,
            batch_efficiency: 0.3,
        }
    }
}

impl CostModelParams {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("prefill_c0", self.prefill_c0),
            ("prefill_c1", self.prefill_c1),
            ("prefill_c2", self.prefill_c2),
            ("decode_per_token", self.decode_per_token),
        ];
        for (name, v) in coeffs {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if self.prefill_c0 + self.prefill_c1 + self.prefill_c2 <= 0.0 {
            return Err(Error::Config("prefill cost must be positive for b >= 1".into()));
        }
        if !(self.batch_efficiency > 0.0 && self.batch_efficiency <= 1.0) {
            return Err(Error::Config("batch_efficiency must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Prefill cost without the domain check; callers guarantee `b >= 1`.
    #[inline]
    pub(crate) fn prefill(&self, b: u32) -> f64 {
        let b = f64::from(b);
        self.prefill_c0 + self.prefill_c1 * b + self.prefill_c2 * b * b
    }
}

/// Estimated prefill seconds for a prompt of `b` tokens.
pub fn prefill_cost(params: &CostModelParams, b: u32) -> Result<f64> {
    if b < 1 {
        return Err(Error::Domain("prefill cost is defined for b >= 1".into()));
    }
    Ok(params.prefill(b))
}

/// Timing breakdown of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTiming {
    /// Cumulative prefill seconds at the end of each request's prefill, in
    /// batch order. Added to the batch start this gives first-token times.
    pub prefill_offsets: Vec<f64>,
    pub prefill: f64,
    pub decode: f64,
}

impl BatchTiming {
    pub fn total(&self) -> f64 {
        self.prefill + self.decode
    }
}

pub fn batch_timing(params: &CostModelParams, batch: &[Request]) -> Result<BatchTiming> {
    if batch.is_empty() {
        return Err(Error::Domain("batch execution time needs a non-empty batch".into()));
    }
    let mut offsets = Vec::with_capacity(batch.len());
    let mut prefill = 0.0;
    let mut discount = 1.0;
    let mut longest_output = 0u32;
    for r in batch {
        if r.prompt_len < 1 {
            return Err(Error::Domain(format!("request {} has an empty prompt", r.id)));
        }
        prefill += params.prefill(r.prompt_len) * discount;
        discount *= params.batch_efficiency;
        offsets.push(prefill);
        longest_output = longest_output.max(r.output_len);
    }
    let step = params.decode_per_token
        * (1.0 + params.batch_efficiency * (batch.len() as f64 - 1.0));
    Ok(BatchTiming {
        prefill_offsets: offsets,
        prefill,
        decode: f64::from(longest_output) * step,
    })
}

/// Seconds the engine is occupied by `batch`.
pub fn batch_execution_time(params: &CostModelParams, batch: &[Request]) -> Result<f64> {
    batch_timing(params, batch).map(|t| t.total())
}
