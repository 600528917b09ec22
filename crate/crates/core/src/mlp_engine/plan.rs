use serde::Serialize;

use super::kernel::KernelAssignment;
use super::schedule::{schedule_at, LayerPlan, PipelineSchedule};
use crate::error::{Error, Result};
use crate::recmodel::ModelSpec;
use crate::storage::TimingParams;
use crate::time::SimTime;

/// The two device MLP chains. The first top layer is split by input
/// columns: its bottom-fed part closes the bottom chain and its
/// embedding-fed part opens the top chain. Both halves use the first top
/// layer's kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StagePlans {
    pub bottom: Vec<LayerPlan>,
    pub top: Vec<LayerPlan>,
}

impl StagePlans {
    /// `bottom_floor[i]` and `top_floor[j]` are per-layer DRAM weight-fetch
    /// floors; the first top layer's floor is shared between its halves in
    /// proportion to their input widths.
    pub fn build(spec: &ModelSpec, a: &KernelAssignment, bottom_floor: &[SimTime], top_floor: &[SimTime]) -> Result<Self> {
        a.validate(spec)?;
        let bs = spec.bottom_shapes();
        let ts = spec.top_shapes();
        if bottom_floor.len() != bs.len() || top_floor.len() != ts.len() {
            return Err(Error::param("floor lists must match the layer counts"));
        }
        let (r_b, r_e, c0) = (spec.bottom_out(), spec.embedding_width(), ts[0].1);
        let f0 = top_floor[0].as_ps();
        let f0_b = SimTime((f0 as u128 * r_b as u128).div_ceil((r_b + r_e) as u128) as u64);
        let f0_e = SimTime(f0) - f0_b;

        let mut b_shapes = bs.clone();
        b_shapes.push((r_b, c0));
        let mut b_kernels = a.bottom.clone();
        b_kernels.push(a.top[0]);
        let mut bottom = LayerPlan::chain(&b_shapes, &b_kernels);
        for (p, &f) in bottom.iter_mut().zip(bottom_floor.iter().chain(std::iter::once(&f0_b))) {
            p.dram_floor = f;
        }

        let mut t_shapes = ts.clone();
        t_shapes[0] = (r_e, c0);
        let mut top = LayerPlan::chain(&t_shapes, &a.top);
        top[0].dram_floor = f0_e;
        for (p, &f) in top.iter_mut().zip(top_floor).skip(1) {
            p.dram_floor = f;
        }
        Ok(StagePlans { bottom, top })
    }

    pub fn without_floors(spec: &ModelSpec, a: &KernelAssignment) -> Result<Self> {
        let zb = vec![SimTime::ZERO; spec.bottom_shapes().len()];
        let zt = vec![SimTime::ZERO; spec.top_shapes().len()];
        Self::build(spec, a, &zb, &zt)
    }

    pub fn bottom_schedule(&self, batch: usize, timing: &TimingParams, origin: SimTime) -> Result<PipelineSchedule> {
        schedule_at(&self.bottom, batch, timing, origin)
    }

    pub fn top_schedule(&self, batch: usize, timing: &TimingParams, origin: SimTime) -> Result<PipelineSchedule> {
        schedule_at(&self.top, batch, timing, origin)
    }

    /// `(T_bot, T_top)` for one batch.
    pub fn times(&self, batch: usize, timing: &TimingParams) -> Result<(SimTime, SimTime)> {
        Ok((
            self.bottom_schedule(batch, timing, SimTime::ZERO)?.makespan,
            self.top_schedule(batch, timing, SimTime::ZERO)?.makespan,
        ))
    }
}
