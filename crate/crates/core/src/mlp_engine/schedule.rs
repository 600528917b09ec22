use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::kernel::{tree_depth, Kernel};
use crate::error::{Error, Result};
use crate::storage::TimingParams;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scan {
    /// Finishes one group of `kc` outputs at a time over the full input.
    Column,
    /// Sweeps input blocks of `kr`, updating every output's partial sum.
    Row,
}

impl Scan {
    pub fn flip(self) -> Scan {
        match self {
            Scan::Column => Scan::Row,
            Scan::Row => Scan::Column,
        }
    }
}

/// One FC layer as the scheduler sees it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerPlan {
    pub inputs: usize,
    pub outputs: usize,
    pub kernel: Kernel,
    pub scan: Scan,
    /// Minimum time to stream this layer's weights from DRAM once per
    /// batch; zero for BRAM-resident layers.
    pub dram_floor: SimTime,
}

impl LayerPlan {
    /// Layers with alternating scan, the first one column-scanned.
    pub fn chain(shapes: &[(usize, usize)], kernels: &[Kernel]) -> Vec<LayerPlan> {
        let mut scan = Scan::Column;
        shapes
            .iter()
            .zip(kernels)
            .map(|(&(inputs, outputs), &kernel)| {
                let p = LayerPlan {
                    inputs,
                    outputs,
                    kernel,
                    scan,
                    dram_floor: SimTime::ZERO,
                };
                scan = scan.flip();
                p
            })
            .collect()
    }

    fn input_blocks(&self) -> usize {
        self.inputs.div_ceil(self.kernel.kr)
    }

    fn output_groups(&self) -> usize {
        self.outputs.div_ceil(self.kernel.kc)
    }

    /// Number of scheduling steps and the duration of each.
    pub fn steps(&self, batch: usize, timing: &TimingParams) -> (usize, SimTime) {
        let (n, cycles) = match self.scan {
            Scan::Column => (self.output_groups(), self.input_blocks() * batch),
            Scan::Row => (self.input_blocks(), self.output_groups() * batch),
        };
        let compute = timing.cycles(cycles as u64);
        let floor = SimTime(self.dram_floor.as_ps().div_ceil(n as u64));
        (n, compute.max(floor))
    }

    pub fn fill(&self, timing: &TimingParams) -> SimTime {
        timing.cycles(tree_depth(self.kernel.kr))
    }

    /// Time for this layer alone with its whole input available.
    pub fn standalone(&self, batch: usize, timing: &TimingParams) -> SimTime {
        let (n, d) = self.steps(batch, timing);
        d * n as u64 + self.fill(timing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Step {
    /// Output group for a column-scanned layer, input block for a
    /// row-scanned one.
    pub group: usize,
    pub start: SimTime,
    pub end: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerTimeline {
    pub scan: Scan,
    pub start: SimTime,
    pub end: SimTime,
    pub steps: Vec<Step>,
    /// When each output value becomes available to the next layer.
    pub output_ready: Vec<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSchedule {
    pub origin: SimTime,
    pub layers: Vec<LayerTimeline>,
    /// Last layer end minus `origin`.
    pub makespan: SimTime,
    /// Layer-by-layer execution with no overlap, from the same origin.
    pub conventional: SimTime,
}

impl PipelineSchedule {
    pub fn end(&self) -> SimTime {
        self.origin + self.makespan
    }

    /// Re-derives every consumption time from the recorded timeline and
    /// rejects any that precede production.
    pub fn check_causality(&self, plans: &[LayerPlan], input_ready: &[SimTime]) -> Result<()> {
        let mut ready: &[SimTime] = input_ready;
        for (l, (tl, p)) in self.layers.iter().zip(plans).enumerate() {
            match tl.scan {
                Scan::Column => {
                    let need = ready.iter().copied().max().unwrap_or(self.origin);
                    if tl.steps.first().map_or(false, |s| s.start < need) {
                        return Err(Error::Schedule(format!("layer {l} starts before its input is complete")));
                    }
                }
                Scan::Row => {
                    for s in &tl.steps {
                        let lo = s.group * p.kernel.kr;
                        let hi = (lo + p.kernel.kr).min(p.inputs);
                        if ready[lo..hi].iter().any(|&r| r > s.start) {
                            return Err(Error::Schedule(format!("layer {l} block {} consumed early", s.group)));
                        }
                    }
                }
            }
            if tl.steps.windows(2).any(|w| w[1].start < w[0].start) {
                return Err(Error::Schedule(format!("layer {l} steps out of order")));
            }
            ready = &tl.output_ready;
        }
        Ok(())
    }

    /// Gantt rows: `layer,output_group,start_ns,end_ns`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,output_group,start_ns,end_ns\n");
        for (l, tl) in self.layers.iter().enumerate() {
            for st in &tl.steps {
                let _ = writeln!(s, "{l},{},{},{}", st.group, st.start.as_ns_f64(), st.end.as_ns_f64());
            }
        }
        s
    }
}

/// Schedules `layers` as a pipeline; `input_ready[i]` is when input `i`
/// of the first layer becomes available.
pub fn pipeline_schedule(
    layers: &[LayerPlan],
    batch: usize,
    timing: &TimingParams,
    origin: SimTime,
    input_ready: &[SimTime],
) -> Result<PipelineSchedule> {
    if layers.is_empty() {
        return Err(Error::param("pipeline needs at least one layer"));
    }
    if batch == 0 {
        return Err(Error::param("batch must be at least 1"));
    }
    if input_ready.len() != layers[0].inputs {
        return Err(Error::shape("pipeline input profile", layers[0].inputs, input_ready.len()));
    }
    let mut expect = Scan::Column;
    for (l, p) in layers.iter().enumerate() {
        // a split half may carry a tile wider than its own input slice
        let k = p.kernel;
        if !(k.kr.is_power_of_two() && k.kc.is_power_of_two()) || p.inputs == 0 || p.outputs == 0 {
            return Err(Error::Kernel {
                layer: format!("pipeline layer {l}"),
                kr: k.kr,
                kc: k.kc,
                rows: p.inputs,
                cols: p.outputs,
            });
        }
        if p.scan != expect {
            return Err(Error::Schedule(format!("scan direction of layer {l}: expected {expect:?}")));
        }
        if l > 0 && layers[l - 1].outputs != p.inputs {
            return Err(Error::shape(format!("input width of layer {l}"), layers[l - 1].outputs, p.inputs));
        }
        expect = expect.flip();
    }

    let mut timelines: Vec<LayerTimeline> = Vec::with_capacity(layers.len());
    for p in layers {
        let ready: &[SimTime] = timelines.last().map_or(input_ready, |t| &t.output_ready);
        let (n, d) = p.steps(batch, timing);
        let fill = p.fill(timing);
        let mut steps = Vec::with_capacity(n);
        let mut output_ready = vec![SimTime::ZERO; p.outputs];
        match p.scan {
            Scan::Column => {
                let start = ready.iter().copied().max().unwrap_or(origin).max(origin);
                for g in 0..n {
                    let s = start + d * g as u64;
                    let e = s + d + fill;
                    steps.push(Step { group: g, start: s, end: e });
                    let lo = g * p.kernel.kc;
                    for r in &mut output_ready[lo..(lo + p.kernel.kc).min(p.outputs)] {
                        *r = e;
                    }
                }
            }
            Scan::Row => {
                let mut free = origin;
                for j in 0..n {
                    let lo = j * p.kernel.kr;
                    let avail = ready[lo..(lo + p.kernel.kr).min(p.inputs)].iter().copied().max().unwrap_or(origin);
                    let s = free.max(avail);
                    free = s + d;
                    steps.push(Step { group: j, start: s, end: free });
                }
                let done = free + fill;
                if let Some(last) = steps.last_mut() {
                    last.end = done;
                }
                output_ready.fill(done);
            }
        }
        let start = steps.first().map_or(origin, |s| s.start);
        let end = steps.iter().map(|s| s.end).max().unwrap_or(origin);
        timelines.push(LayerTimeline {
            scan: p.scan,
            start,
            end,
            steps,
            output_ready,
        });
    }

    let end = timelines.last().map_or(origin, |t| t.end);
    let all_in = input_ready.iter().copied().max().unwrap_or(origin).max(origin);
    let conventional = (all_in - origin) + layers.iter().map(|p| p.standalone(batch, timing)).sum::<SimTime>();
    let sched = PipelineSchedule {
        origin,
        layers: timelines,
        makespan: end - origin,
        conventional,
    };
    sched.check_causality(layers, input_ready)?;
    Ok(sched)
}

/// Schedules a chain whose input is fully available at `origin`.
pub fn schedule_at(layers: &[LayerPlan], batch: usize, timing: &TimingParams, origin: SimTime) -> Result<PipelineSchedule> {
    let width = layers.first().map_or(0, |l| l.inputs);
    pipeline_schedule(layers, batch, timing, origin, &vec![origin; width])
}
