//! The JSON run configuration. Every section is optional and falls back to
//! the library defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use ewsjf_core::costmodel::CostModelParams;
use ewsjf_core::engine::EngineConfig;
use ewsjf_core::metaopt::{RewardConfig, SearchConfig, ThetaBounds};
use ewsjf_core::partitioner::PartitionParams;
use ewsjf_core::scheduler::{BatchBudget, MetaParams, SchedulerKind};
use ewsjf_core::workload::WorkloadConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};

/// Simulator settings other than the cost model and batch budget, which have
/// their own sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub strategic_interval: f64,
    pub online_interval: f64,
    pub horizon: Option<f64>,
    pub class_boundary: u32,
    pub monitor_window: usize,
    pub backlog_interval: f64,
}

impl Default for EngineSection {
    fn default() -> Self {
        let d = EngineConfig::default();
        Self {
            strategic_interval: d.strategic_interval,
            online_interval: d.online_interval,
            horizon: d.horizon,
            class_boundary: d.class_boundary,
            monitor_window: d.monitor_window,
            backlog_interval: d.backlog_interval,
        }
    }
}

/// Schedulers and arrival rates of the `run` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub schedulers: Vec<SchedulerKind>,
    /// Requests per second; each rate regenerates the workload with that rate.
    pub arrival_rates: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { schedulers: SchedulerKind::ALL.to_vec(), arrival_rates: vec![4.0, 8.0, 16.0, 32.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaoptConfig {
    pub trials: usize,
    pub seed: u64,
    pub bounds: ThetaBounds,
    pub search: SearchConfig,
}

impl Default for MetaoptConfig {
    fn default() -> Self {
        Self { trials: 12, seed: 0, bounds: ThetaBounds::default(), search: SearchConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub workload_config: WorkloadConfig,
    pub engine_config: EngineSection,
    pub cost_model: CostModelParams,
    pub batch_budget: BatchBudget,
    pub meta_params: MetaParams,
    pub partition_params: PartitionParams,
    pub reward_config: RewardConfig,
    pub metaopt: MetaoptConfig,
    pub sweep: SweepConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workload_config: WorkloadConfig::default(),
            engine_config: EngineSection::default(),
            cost_model: CostModelParams::default(),
            batch_budget: BatchBudget::default(),
            meta_params: MetaParams::default(),
            partition_params: PartitionParams::default(),
            reward_config: RewardConfig::default(),
            metaopt: MetaoptConfig::default(),
            sweep: SweepConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
    }

    /// Seeds both the workload generator and the meta-optimizer.
    pub fn set_seed(&mut self, seed: u64) {
        self.workload_config.rng_seed = seed;
        self.metaopt.seed = seed;
    }

    pub fn engine(&self, scheduler: SchedulerKind) -> EngineConfig {
        let e = &self.engine_config;
        EngineConfig {
            scheduler,
            batch_budget: self.batch_budget,
            cost_model: self.cost_model,
            strategic_interval: e.strategic_interval,
            online_interval: e.online_interval,
            horizon: e.horizon,
            class_boundary: e.class_boundary,
            monitor_window: e.monitor_window,
            backlog_interval: e.backlog_interval,
            record_batches: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.workload_config.validate()?;
        self.engine(SchedulerKind::Ewsjf).validate()?;
        self.meta_params.validate()?;
        self.partition_params.validate()?;
        self.reward_config.validate()?;
        self.metaopt.bounds.validate()?;
        self.metaopt.search.validate()?;
        if self.sweep.schedulers.is_empty() || self.sweep.arrival_rates.is_empty() {
            return Err(Error::Usage("sweep needs at least one scheduler and one arrival rate".into()));
        }
        if let Some(r) = self.sweep.arrival_rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Usage(format!("sweep arrival rate {r} must be positive")));
        }
        Ok(())
    }
}
