//! MLP acceleration engine: tiled FC layers with adder-tree reduction,
//! the column split of the first top layer, and alternating-scan pipeline
//! timing.
//!
//! Cycle model: a layer issues one `kr × kc` tile per cycle, so a batch of
//! `B` takes `ceil(R/kr)·ceil(C/kc)·B` issue cycles, plus
//! `ceil(log2(max(kr, 2)))` cycles of adder-tree fill paid once per layer.

mod forward;
mod kernel;
mod plan;
mod schedule;

pub use forward::{bottom_stage, decompose_l0, DeviceStages, fc_forward_blocked, mlp_forward_blocked, top_stage, L0Split};
pub use kernel::{fc_cycles, tree_depth, Kernel, KernelAssignment};
pub use plan::StagePlans;
pub use schedule::{pipeline_schedule, schedule_at, LayerPlan, LayerTimeline, PipelineSchedule, Scan, Step};
