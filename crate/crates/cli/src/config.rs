//! The scenario configuration document.
//!
//! A TOML file with one table per concern. Every table and every key is
//! optional and falls back to the printed defaults (`rmssd --print-defaults`);
//! unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use rmssd::ev_engine::Placement;
use rmssd::kernel_search::{ResourceModel, SearchSpace};
use rmssd::recmodel::{load_model_spec, presets, IndexDistribution, ModelSpec};
use rmssd::sim::{KernelChoice, Mode, ProfileParams, Scenario, WorkloadParams};
use rmssd::storage::{SsdGeometry, TimingParams};
use rmssd::{Error, Result, SimTime};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioBlock,
    pub model: ModelBlock,
    pub geometry: SsdGeometry,
    pub timing: TimingParams,
    pub workload: WorkloadBlock,
    pub search: SearchBlock,
    pub profile: ProfileParams,
    pub resources: ResourceModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioBlock {
    /// Defaults to `<model>/<mode>`.
    pub name: Option<String>,
    pub mode: Mode,
    /// Workload seed unless `--seed` is given.
    pub seed: u64,
    pub weight_seed: u64,
    pub kernels: KernelChoice,
    pub placement: Placement,
}

impl Default for ScenarioBlock {
    fn default() -> Self {
        ScenarioBlock {
            name: None,
            mode: Mode::RmSsd,
            seed: 1,
            weight_seed: 1,
            kernels: KernelChoice::Auto,
            placement: Placement::Contiguous,
        }
    }
}

/// Exactly one of `preset`, `path` (a model-spec TOML file, relative to
/// the config file) or an inline `spec` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub spec: Option<ModelSpec>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            preset: Some(presets::NAMES[0].to_string()),
            path: None,
            spec: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadBlock {
    pub distribution: IndexDistribution,
    pub pooling: usize,
    pub queries: usize,
    pub batch: usize,
    /// Simulated-time cut-off in microseconds; absent means run to completion.
    pub horizon_us: Option<f64>,
}

impl Default for WorkloadBlock {
    fn default() -> Self {
        let w = WorkloadParams::default();
        WorkloadBlock {
            distribution: w.distribution,
            pooling: w.pooling,
            queries: w.queries,
            batch: w.batch,
            horizon_us: None,
        }
    }
}

/// Kernel-search space. The search starts at `workload.batch` and doubles
/// the batch up to `max_batch` until a feasible assignment exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchBlock {
    pub kernel_sizes: Vec<usize>,
    pub max_batch: usize,
}

impl Default for SearchBlock {
    fn default() -> Self {
        let s = SearchSpace::default();
        SearchBlock {
            kernel_sizes: s.kernel_sizes,
            max_batch: s.max_batch,
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: ScenarioBlock::default(),
            model: ModelBlock::default(),
            geometry: SsdGeometry::default(),
            timing: TimingParams::default(),
            workload: WorkloadBlock::default(),
            search: SearchBlock::default(),
            profile: ProfileParams::default(),
            resources: ResourceModel::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn defaults_toml() -> String {
        toml::to_string(&ScenarioConfig::default()).expect("defaults serialize")
    }

    fn model_spec(&self, base: &Path) -> Result<ModelSpec> {
        let m = &self.model;
        match (&m.preset, &m.path, &m.spec) {
            (Some(p), None, None) => {
                presets::by_name(p).ok_or_else(|| Error::Config(format!("unknown model preset '{p}'")))
            }
            (None, Some(p), None) => load_model_spec(&base.join(p)).map_err(|e| Error::Config(e.to_string())),
            (None, None, Some(s)) => Ok(s.clone()),
            _ => Err(Error::Config("model needs exactly one of preset, path or spec".into())),
        }
    }

    /// Resolves and validates the scenario; `base` anchors relative paths.
    pub fn scenario(&self, base: &Path) -> Result<Scenario> {
        let model = self.model_spec(base)?;
        let horizon = match self.workload.horizon_us {
            Some(us) if !(us > 0.0 && us.is_finite()) => {
                return Err(Error::Config(format!("horizon_us must be > 0, got {us}")))
            }
            h => h.map(SimTime::from_us_f64),
        };
        let s = &self.scenario;
        let scenario = Scenario {
            name: s.name.clone().unwrap_or_else(|| format!("{}/{}", model.name(), s.mode.label())),
            mode: s.mode,
            model,
            weight_seed: s.weight_seed,
            geometry: self.geometry,
            timing: self.timing,
            placement: s.placement,
            kernels: s.kernels.clone(),
            workload: WorkloadParams {
                distribution: self.workload.distribution,
                pooling: self.workload.pooling,
                queries: self.workload.queries,
                batch: self.workload.batch,
                horizon,
            },
            search: SearchSpace {
                kernel_sizes: self.search.kernel_sizes.clone(),
                initial_batch: self.workload.batch,
                max_batch: self.search.max_batch,
            },
            profile: self.profile,
            resources: self.resources,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
