//! Embedding lookup engine: EV translator, EV-FMC dispatch with page
//! coalescing, and the EV-sum adder, functionally and in simulated time.
//!
//! Translation and the MUX/DEMUX control path take zero modeled time. The
//! coalescing window is one dispatched batch. Dispersal across channels and
//! dies comes from FTL striping alone; the FMC does not reorder for balance.

mod dispatch;
mod extent;
mod layout;
mod sum;

use serde::Serialize;

use crate::error::Result;
use crate::recmodel::Query;
use crate::storage::{simulate_reads, SsdGeometry, TimingParams};
use crate::time::SimTime;

pub use dispatch::{dispatch, translate_batch, DispatchPlan, EvRequest, PageJob, PathBuffer};
pub use extent::{build_extent_map, table_pages, Extent, ExtentMap, FileExtent, TableExtents};
pub use layout::{Device, FlashImage, Placement};
pub use sum::{add_interval_cycles, ev_sum_engine, run_adder, SumResult, SumStream};

/// Per-query result of the embedding stage.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryLookup {
    /// Concatenated pooled vectors, `ev_dim · tables` wide.
    pub pooled: Vec<f32>,
    /// Absolute completion time of the last EV sum for this query.
    pub done: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LookupStats {
    pub ev_requests: usize,
    pub page_reads: usize,
    pub events: u64,
    /// Die occupancy per die, channel-major.
    pub die_busy: Vec<SimTime>,
    pub bus_busy: Vec<SimTime>,
}

#[derive(Debug, Clone)]
pub struct LookupOutcome {
    pub issue: SimTime,
    pub queries: Vec<QueryLookup>,
    /// Batch embedding-stage time: issue to last EV-sum completion.
    pub t_emb: SimTime,
    pub stats: LookupStats,
}

impl LookupOutcome {
    pub fn latency(&self, query: usize) -> SimTime {
        self.queries[query].done - self.issue
    }

    /// Fraction of `window` each channel's dies were occupied.
    pub fn channel_utilization(&self, geometry: &SsdGeometry, window: SimTime) -> Vec<f64> {
        channel_utilization(&self.stats.die_busy, geometry, window)
    }
}

pub fn channel_utilization(die_busy: &[SimTime], geometry: &SsdGeometry, window: SimTime) -> Vec<f64> {
    (0..geometry.channels)
        .map(|c| {
            if window == SimTime::ZERO {
                return 0.0;
            }
            let busy: u64 = (0..geometry.dies_per_channel)
                .map(|d| die_busy[geometry.die_index(c, d)].as_ps())
                .sum();
            busy as f64 / (window.as_ps() as f64 * geometry.dies_per_channel as f64)
        })
        .collect()
}

/// The in-storage lookup engine bound to a provisioned device.
#[derive(Debug, Clone, Copy)]
pub struct EvEngine<'a> {
    pub device: &'a Device,
    pub timing: &'a TimingParams,
    pub ev_dim: usize,
    /// EV-sum adder width.
    pub kc_e: usize,
}

impl<'a> EvEngine<'a> {
    pub fn new(device: &'a Device, timing: &'a TimingParams, ev_dim: usize, kc_e: usize) -> Self {
        EvEngine {
            device,
            timing,
            ev_dim,
            kc_e,
        }
    }

    pub fn add_interval(&self) -> SimTime {
        self.timing.cycles(add_interval_cycles(self.ev_dim, self.kc_e))
    }

    /// Runs one batch through translate, dispatch, page reads and EV sum,
    /// starting on an idle device at `issue`.
    pub fn simulate_lookup(&self, queries: &[Query], issue: SimTime) -> Result<LookupOutcome> {
        let dev = self.device;
        let requests = translate_batch(&dev.extents, &dev.ftl, queries, issue)?;
        let plan = dispatch(&requests, &mut PathBuffer::new(), &dev.geometry);
        let run = simulate_reads(&dev.geometry, self.timing, &plan.page_reads(issue));

        let mut arrival = vec![SimTime::ZERO; requests.len()];
        for (job, c) in plan.pages.iter().zip(&run.completions) {
            for &r in &job.requests {
                arrival[r] = c.done;
            }
        }

        let mut streams: Vec<SumStream> = Vec::new();
        for (r, req) in requests.iter().enumerate() {
            if req.position == 0 {
                streams.push(SumStream {
                    query: req.query,
                    table: req.table,
                    evs: Vec::new(),
                });
            }
            let ev = dev.image.read_ev(req.lba, req.offset, self.ev_dim);
            streams.last_mut().expect("position 0 opens a stream").evs.push((arrival[r], ev));
        }
        let sums = run_adder(&streams, self.ev_dim, self.add_interval())?;

        let mut out: Vec<QueryLookup> = queries
            .iter()
            .map(|q| QueryLookup {
                pooled: Vec::with_capacity(self.ev_dim * q.indices.len()),
                done: issue,
            })
            .collect();
        for (st, res) in streams.iter().zip(sums) {
            let ql = &mut out[st.query];
            ql.pooled.extend(res.sum);
            ql.done = ql.done.max(res.done);
        }
        let t_emb = out.iter().map(|q| q.done).max().unwrap_or(issue) - issue;
        Ok(LookupOutcome {
            issue,
            queries: out,
            t_emb,
            stats: LookupStats {
                ev_requests: requests.len(),
                page_reads: plan.pages.len(),
                events: run.events,
                die_busy: run.die_busy,
                bus_busy: run.bus_busy,
            },
        })
    }
}
