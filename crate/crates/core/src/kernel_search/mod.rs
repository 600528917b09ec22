//! Kernel-size search: the smallest total tile area whose MLP stage times
//! stay within the embedding stage time, under a BRAM/DRAM weight model.
//!
//! The objective is `Σ kr·kc` over every FC layer plus `kr_e·kc_e` for the
//! EV-sum unit, with `kr_e` fixed at 1. Logic cost is linear in that area,
//! so ties on area are ties on DSPs; remaining ties go to the
//! lexicographically smallest flat kernel list (bottom, top, EV-sum).
//!
//! Given the batch and `kc_e`, the two chains share only the first top
//! layer's tile, so the search fixes that tile and `kc_e` and solves each
//! chain exactly by branch and bound. Batches double from
//! `initial_batch` up to `max_batch` until a feasible assignment appears.

mod resources;
mod search;

pub use resources::{layer_bytes, place_weights, resource_usage, ResourceModel, ResourceUsage, WeightPlacement};
pub use search::{
    search, verify_constraints, ConstraintReport, ProfileTimer, SearchContext, SearchOutcome, SearchSpace, Slack,
    StageTimer, StageTimes, WorkloadProfile,
};
