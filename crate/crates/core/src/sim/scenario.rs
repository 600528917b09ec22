use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ev_engine::Placement;
use crate::kernel_search::{ResourceModel, SearchSpace};
use crate::mlp_engine::KernelAssignment;
use crate::recmodel::{presets, IndexDistribution, ModelSpec};
use crate::storage::{SsdGeometry, TimingParams};
use crate::time::SimTime;

/// System configuration being simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    /// Lookups, EV sums and both MLPs inside the device.
    RmSsd,
    /// Lookups and EV sums inside the device, MLPs on the host.
    EmbVectorSum,
    /// Host inference over a DRAM-resident subset of embedding rows; the
    /// rest are read through the block interface.
    SsdS { dram_fraction: f64 },
}

impl Mode {
    pub fn label(&self) -> String {
        match self {
            Mode::RmSsd => "rm_ssd".into(),
            Mode::EmbVectorSum => "emb_vector_sum".into(),
            Mode::SsdS { dram_fraction } => format!("ssd_s({dram_fraction})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    /// Run the kernel search before simulating.
    Auto,
    Explicit(KernelAssignment),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadParams {
    pub distribution: IndexDistribution,
    pub pooling: usize,
    pub queries: usize,
    /// Queries per device batch. The kernel search may raise it.
    pub batch: usize,
    /// Optional cut-off; queries unfinished by then count as in flight.
    pub horizon: Option<SimTime>,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        WorkloadParams {
            distribution: IndexDistribution::Uniform,
            pooling: 20,
            queries: 10_000,
            batch: 1,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileParams {
    /// Batches averaged when estimating the embedding stage time.
    pub batches: usize,
    pub seed: u64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        ProfileParams { batches: 8, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub model: ModelSpec,
    pub weight_seed: u64,
    pub geometry: SsdGeometry,
    pub timing: TimingParams,
    pub placement: Placement,
    pub kernels: KernelChoice,
    pub workload: WorkloadParams,
    pub search: SearchSpace,
    pub profile: ProfileParams,
    pub resources: ResourceModel,
}

impl Scenario {
    /// Default desk setup for `preset` in `mode`.
    pub fn desk(preset: &str, mode: Mode) -> Result<Self> {
        let model = presets::by_name(preset).ok_or_else(|| Error::Config(format!("unknown model preset '{preset}'")))?;
        Ok(Scenario {
            name: format!("{preset}/{}", mode.label()),
            mode,
            model,
            weight_seed: 1,
            geometry: SsdGeometry::default(),
            timing: TimingParams::default(),
            placement: Placement::Contiguous,
            kernels: KernelChoice::Auto,
            workload: WorkloadParams::default(),
            search: SearchSpace::default(),
            profile: ProfileParams::default(),
            resources: ResourceModel::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.geometry.validate().map_err(cfg)?;
        self.timing.validate().map_err(cfg)?;
        self.resources.validate().map_err(cfg)?;
        self.workload.distribution.validate().map_err(cfg)?;
        if let Mode::SsdS { dram_fraction } = self.mode {
            if !(dram_fraction > 0.0 && dram_fraction <= 1.0) {
                return Err(Error::Config(format!("dram_fraction must be in (0, 1], got {dram_fraction}")));
            }
        }
        if self.workload.pooling == 0 || self.workload.batch == 0 {
            return Err(Error::Config("pooling and batch must be >= 1".into()));
        }
        if self.profile.batches == 0 {
            return Err(Error::Config("profile batches must be >= 1".into()));
        }
        if let KernelChoice::Explicit(a) = &self.kernels {
            a.validate(&self.model).map_err(cfg)?;
        } else if self.mode == Mode::RmSsd {
            self.search.validate().map_err(cfg)?;
        }
        if let Placement::Fragmented { pieces: 0, .. } = self.placement {
            return Err(Error::Config("fragmented placement needs at least one piece".into()));
        }
        Ok(())
    }
}
