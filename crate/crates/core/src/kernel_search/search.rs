use std::cell::RefCell;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::resources::{place_weights, resource_usage, ResourceModel, ResourceUsage, WeightPlacement};
use crate::error::{Error, Result};
use crate::ev_engine::{Device, EvEngine};
use crate::mlp_engine::{schedule_at, Kernel, KernelAssignment, LayerPlan, Scan, StagePlans};
use crate::recmodel::{generate_workload, IndexDistribution, ModelSpec};
use crate::storage::TimingParams;
use crate::time::SimTime;

/// Embedding-stage time for an EV-sum width and batch size.
pub trait StageTimer {
    fn t_emb(&self, kc_e: usize, batch: usize) -> Result<SimTime>;
}

impl<F: Fn(usize, usize) -> SimTime> StageTimer for F {
    fn t_emb(&self, kc_e: usize, batch: usize) -> Result<SimTime> {
        Ok(self(kc_e, batch))
    }
}

/// Workload used to profile the embedding stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub distribution: IndexDistribution,
    pub pooling: usize,
    /// Batches averaged per estimate.
    pub batches: usize,
    pub seed: u64,
}

/// `T_emb` as the mean simulated lookup time over `profile.batches`
/// batches drawn from a fixed seed. Results are memoized.
pub struct ProfileTimer<'a> {
    device: &'a Device,
    timing: &'a TimingParams,
    spec: &'a ModelSpec,
    profile: WorkloadProfile,
    cache: RefCell<BTreeMap<(usize, usize), SimTime>>,
}

impl<'a> ProfileTimer<'a> {
    pub fn new(device: &'a Device, timing: &'a TimingParams, spec: &'a ModelSpec, profile: WorkloadProfile) -> Self {
        ProfileTimer {
            device,
            timing,
            spec,
            profile,
            cache: RefCell::new(BTreeMap::new()),
        }
    }
}

impl StageTimer for ProfileTimer<'_> {
    fn t_emb(&self, kc_e: usize, batch: usize) -> Result<SimTime> {
        if let Some(t) = self.cache.borrow().get(&(kc_e, batch)) {
            return Ok(*t);
        }
        let n = self.profile.batches.max(1);
        let p = &self.profile;
        let queries = generate_workload(self.spec, p.distribution, p.pooling, batch * n, p.seed)?;
        let eng = EvEngine::new(self.device, self.timing, self.spec.ev_dim(), kc_e);
        let mut total: u128 = 0;
        for chunk in queries.chunks(batch) {
            total += eng.simulate_lookup(chunk, SimTime::ZERO)?.t_emb.as_ps() as u128;
        }
        let mean = SimTime(((total + n as u128 / 2) / n as u128) as u64);
        self.cache.borrow_mut().insert((kc_e, batch), mean);
        Ok(mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    /// Candidate tile sizes; each is used where it is a power of two no
    /// larger than the layer dimension.
    pub kernel_sizes: Vec<usize>,
    pub initial_batch: usize,
    pub max_batch: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            kernel_sizes: (0..9).map(|e| 1 << e).collect(),
            initial_batch: 1,
            max_batch: 256,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if !self.kernel_sizes.iter().any(|s| s.is_power_of_two()) {
            return Err(Error::param("kernel_sizes needs at least one power of two"));
        }
        if self.initial_batch == 0 || self.max_batch < self.initial_batch {
            return Err(Error::param("need 1 <= initial_batch <= max_batch"));
        }
        Ok(())
    }

    fn sizes_upto(&self, dim: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .kernel_sizes
            .iter()
            .copied()
            .filter(|s| s.is_power_of_two() && *s <= dim)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Candidate tiles for an `r × c` layer in ascending `(kr, kc)` order.
    pub fn tiles(&self, r: usize, c: usize) -> Vec<Kernel> {
        let kcs = self.sizes_upto(c);
        self.sizes_upto(r)
            .into_iter()
            .flat_map(|kr| kcs.iter().map(move |&kc| Kernel::new(kr, kc)))
            .collect()
    }

    pub fn batches(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(self.initial_batch), |b| b.checked_mul(2)).take_while(|b| *b <= self.max_batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageTimes {
    #[serde(rename = "t_bot_ps")]
    pub t_bot: SimTime,
    #[serde(rename = "t_top_ps")]
    pub t_top: SimTime,
    #[serde(rename = "t_emb_ps")]
    pub t_emb: SimTime,
}

impl StageTimes {
    pub fn slack(&self) -> Slack {
        let s = |t: SimTime| self.t_emb.as_ps() as i64 - t.as_ps() as i64;
        Slack {
            bottom_ps: s(self.t_bot),
            top_ps: s(self.t_top),
        }
    }

    pub fn feasible(&self) -> bool {
        self.t_bot <= self.t_emb && self.t_top <= self.t_emb
    }
}

/// `T_emb − T_bot` and `T_emb − T_top`; negative means violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Slack {
    pub bottom_ps: i64,
    pub top_ps: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub assignment: KernelAssignment,
    pub batch: usize,
    pub times: StageTimes,
    pub resources: ResourceUsage,
    pub objective: u64,
    pub feasible: bool,
    pub slack: Slack,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub times: StageTimes,
    pub slack: Slack,
    pub violations: Vec<String>,
}

impl ConstraintReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Everything the search evaluates candidates against.
pub struct SearchContext<'a> {
    pub spec: &'a ModelSpec,
    pub timing: &'a TimingParams,
    pub resources: ResourceModel,
    pub placement: WeightPlacement,
    pub timer: &'a dyn StageTimer,
}

impl<'a> SearchContext<'a> {
    pub fn new(spec: &'a ModelSpec, timing: &'a TimingParams, resources: ResourceModel, timer: &'a dyn StageTimer) -> Self {
        SearchContext {
            spec,
            timing,
            resources,
            placement: place_weights(spec, &resources),
            timer,
        }
    }

    pub fn plans(&self, a: &KernelAssignment) -> Result<StagePlans> {
        StagePlans::build(self.spec, a, &self.placement.bottom_floor, &self.placement.top_floor)
    }

    pub fn estimate_times(&self, a: &KernelAssignment, batch: usize) -> Result<StageTimes> {
        let (t_bot, t_top) = self.plans(a)?.times(batch, self.timing)?;
        Ok(StageTimes {
            t_bot,
            t_top,
            t_emb: self.timer.t_emb(a.kc_e, batch)?,
        })
    }

    pub fn outcome(&self, a: KernelAssignment, batch: usize) -> Result<SearchOutcome> {
        let times = self.estimate_times(&a, batch)?;
        Ok(SearchOutcome {
            resources: resource_usage(self.spec, &a, &self.resources),
            objective: a.objective(),
            feasible: times.feasible(),
            slack: times.slack(),
            times,
            assignment: a,
            batch,
        })
    }
}

/// Re-evaluates the stage times for `a` at `batch` and reports slack and
/// any violated constraint.
pub fn verify_constraints(ctx: &SearchContext, a: &KernelAssignment, batch: usize) -> Result<ConstraintReport> {
    let times = ctx.estimate_times(a, batch)?;
    let slack = times.slack();
    let mut violations = Vec::new();
    if slack.bottom_ps < 0 {
        violations.push(format!("T_bot {} exceeds T_emb {}", times.t_bot, times.t_emb));
    }
    if slack.top_ps < 0 {
        violations.push(format!("T_top {} exceeds T_emb {}", times.t_top, times.t_emb));
    }
    Ok(ConstraintReport {
        times,
        slack,
        violations,
    })
}

struct Slot {
    inputs: usize,
    outputs: usize,
    floor: SimTime,
    tiles: Vec<Kernel>,
}

/// Minimum-area tiles for one chain with makespan at most `limit`, the
/// lexicographically smallest among equal areas.
///
/// Depth-first in ascending tile order with two prunes: area (current plus
/// one per remaining layer) and time (prefix makespan plus a per-layer
/// lower bound for the rest). A column layer cannot start before its
/// whole input exists and a row layer's last block waits for the last
/// input, so each remaining layer adds at least its cheapest standalone
/// time or cheapest single step plus fill.
struct ChainSearch<'a> {
    slots: Vec<Slot>,
    batch: usize,
    timing: &'a TimingParams,
    limit: SimTime,
    tail_time: Vec<SimTime>,
    tail_area: Vec<u64>,
    best: Option<(u64, Vec<Kernel>)>,
}

impl<'a> ChainSearch<'a> {
    fn run(slots: Vec<Slot>, batch: usize, timing: &'a TimingParams, limit: SimTime) -> Result<Option<(u64, Vec<Kernel>)>> {
        let n = slots.len();
        let mut tail_time = vec![SimTime::ZERO; n + 1];
        let mut tail_area = vec![0u64; n + 1];
        let mut scan = if n % 2 == 1 { Scan::Column } else { Scan::Row };
        for i in (0..n).rev() {
            let s = &slots[i];
            let fastest = s
                .tiles
                .iter()
                .map(|&k| {
                    let p = LayerPlan {
                        inputs: s.inputs,
                        outputs: s.outputs,
                        kernel: k,
                        scan,
                        dram_floor: s.floor,
                    };
                    match scan {
                        Scan::Column => p.standalone(batch, timing),
                        Scan::Row => p.steps(batch, timing).1 + p.fill(timing),
                    }
                })
                .min()
                .unwrap_or(SimTime::ZERO);
            tail_time[i] = tail_time[i + 1] + fastest;
            tail_area[i] = tail_area[i + 1] + s.tiles.iter().map(|k| k.area()).min().unwrap_or(0);
            scan = scan.flip();
        }
        let mut cs = ChainSearch {
            slots,
            batch,
            timing,
            limit,
            tail_time,
            tail_area,
            best: None,
        };
        cs.dfs(&mut Vec::with_capacity(n), 0)?;
        Ok(cs.best)
    }

    fn dfs(&mut self, chosen: &mut Vec<Kernel>, area: u64) -> Result<()> {
        let i = chosen.len();
        if let Some((best, _)) = &self.best {
            if area + self.tail_area[i] >= *best {
                return Ok(());
            }
        }
        if i == self.slots.len() {
            self.best = Some((area, chosen.clone()));
            return Ok(());
        }
        for t in 0..self.slots[i].tiles.len() {
            let k = self.slots[i].tiles[t];
            chosen.push(k);
            let shapes: Vec<(usize, usize)> = self.slots[..=i].iter().map(|s| (s.inputs, s.outputs)).collect();
            let mut plans = LayerPlan::chain(&shapes, chosen);
            for (p, s) in plans.iter_mut().zip(&self.slots) {
                p.dram_floor = s.floor;
            }
            let prefix = schedule_at(&plans, self.batch, self.timing, SimTime::ZERO)?.makespan;
            if prefix + self.tail_time[i + 1] <= self.limit {
                self.dfs(chosen, area + k.area())?;
            }
            chosen.pop();
        }
        Ok(())
    }
}

/// Minimum-area kernel assignment with `T_bot ≤ T_emb` and `T_top ≤ T_emb`,
/// doubling the batch from `space.initial_batch` until feasible.
pub fn search(ctx: &SearchContext, space: &SearchSpace) -> Result<SearchOutcome> {
    space.validate()?;
    ctx.resources.validate()?;
    let spec = ctx.spec;
    let bs = spec.bottom_shapes();
    let ts = spec.top_shapes();
    let (r_b, r_e, c0) = (spec.bottom_out(), spec.embedding_width(), ts[0].1);
    let floor = &ctx.placement;
    let f0 = floor.top_floor[0].as_ps();
    let f0_b = SimTime((f0 as u128 * r_b as u128).div_ceil((r_b + r_e) as u128) as u64);
    let f0_e = SimTime(f0) - f0_b;

    let bottom_tiles: Vec<Vec<Kernel>> = bs.iter().map(|&(r, c)| space.tiles(r, c)).collect();
    let top_tiles: Vec<Vec<Kernel>> = ts.iter().map(|&(r, c)| space.tiles(r, c)).collect();
    let ev_sizes = space.sizes_upto(spec.ev_dim());
    if bottom_tiles.iter().chain(&top_tiles).any(|t| t.is_empty()) || ev_sizes.is_empty() {
        return Err(Error::param("search space leaves some layer without a candidate tile"));
    }

    for batch in space.batches() {
        let mut best: Option<(u64, Vec<(usize, usize)>, KernelAssignment)> = None;
        for &kc_e in &ev_sizes {
            let t_emb = ctx.timer.t_emb(kc_e, batch)?;
            for &k0 in &top_tiles[0] {
                let mut bslots: Vec<Slot> = bs
                    .iter()
                    .zip(&bottom_tiles)
                    .zip(&floor.bottom_floor)
                    .map(|((&(inputs, outputs), tiles), &floor)| Slot {
                        inputs,
                        outputs,
                        floor,
                        tiles: tiles.clone(),
                    })
                    .collect();
                bslots.push(Slot {
                    inputs: r_b,
                    outputs: c0,
                    floor: f0_b,
                    tiles: vec![k0],
                });
                let Some((_, bk)) = ChainSearch::run(bslots, batch, ctx.timing, t_emb)? else {
                    continue;
                };
                let mut tslots = vec![Slot {
                    inputs: r_e,
                    outputs: c0,
                    floor: f0_e,
                    tiles: vec![k0],
                }];
                for ((&(inputs, outputs), tiles), &floor) in ts.iter().zip(&top_tiles).zip(&floor.top_floor).skip(1) {
                    tslots.push(Slot {
                        inputs,
                        outputs,
                        floor,
                        tiles: tiles.clone(),
                    });
                }
                let Some((_, tk)) = ChainSearch::run(tslots, batch, ctx.timing, t_emb)? else {
                    continue;
                };
                let a = KernelAssignment {
                    bottom: bk[..bk.len() - 1].to_vec(),
                    top: tk,
                    kr_e: 1,
                    kc_e,
                };
                let key = (a.objective(), a.flat());
                if best.as_ref().map_or(true, |(o, f, _)| (key.0, &key.1) < (*o, f)) {
                    best = Some((key.0, key.1, a));
                }
            }
        }
        if let Some((_, _, a)) = best {
            return ctx.outcome(a, batch);
        }
    }
    Err(Error::Infeasible {
        max_batch: space.max_batch,
        binding: binding_constraint(ctx, space, &bottom_tiles, &top_tiles, &ev_sizes)?,
    })
}

/// Describes which constraint fails with the largest candidate tiles at
/// the largest batch tried.
fn binding_constraint(
    ctx: &SearchContext,
    space: &SearchSpace,
    bottom: &[Vec<Kernel>],
    top: &[Vec<Kernel>],
    ev: &[usize],
) -> Result<String> {
    let last = |t: &Vec<Kernel>| *t.last().expect("non-empty");
    let a = KernelAssignment {
        bottom: bottom.iter().map(last).collect(),
        top: top.iter().map(last).collect(),
        kr_e: 1,
        kc_e: *ev.last().expect("non-empty"),
    };
    let batch = space.batches().last().unwrap_or(space.initial_batch);
    let t = ctx.estimate_times(&a, batch)?;
    let mut parts = Vec::new();
    if t.t_bot > t.t_emb {
        parts.push(format!("T_bot {} > T_emb {}", t.t_bot, t.t_emb));
    }
    if t.t_top > t.t_emb {
        parts.push(format!("T_top {} > T_emb {}", t.t_top, t.t_emb));
    }
    if parts.is_empty() {
        parts.push(format!(
            "no single tile choice meets both stage limits (largest tiles: T_bot {}, T_top {}, T_emb {})",
            t.t_bot, t.t_top, t.t_emb
        ));
    }
    Ok(format!("batch {batch}, largest tiles: {}", parts.join("; ")))
}
