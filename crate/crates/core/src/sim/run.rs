use std::collections::{HashMap, VecDeque};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::event::EventQueue;
use super::metrics::{FunctionalCheck, LatencySummary, Metrics, Stage, TraceRow, SCHEMA_VERSION};
use super::scenario::{KernelChoice, Mode, Scenario};
use crate::error::Result;
use crate::ev_engine::{channel_utilization, Device, EvEngine, LookupOutcome};
use crate::kernel_search::{
    place_weights, resource_usage, search, ProfileTimer, SearchContext, SearchOutcome, SearchSpace, WorkloadProfile,
};
use crate::mlp_engine::{DeviceStages, KernelAssignment, StagePlans};
use crate::recmodel::{
    bottom_forward, generate_workload, mlp_forward, reference_inference, reference_inference_blocked, rel_err,
    Activation, IndexDistribution, Model, Query,
};
use crate::storage::host_block_read;
use crate::time::SimTime;

/// Tolerance for host-computed scores against the sequential reference.
pub const SCORE_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub traces: Vec<TraceRow>,
    pub scores: Vec<Option<f32>>,
    /// Per-query latency for completed queries.
    pub latencies: Vec<Option<SimTime>>,
    pub search: Option<SearchOutcome>,
}

/// Kernels and batch an RM-SSD run will use.
pub fn resolve_kernels(scenario: &Scenario, model: &Model, device: &Device) -> Result<(KernelAssignment, usize, Option<SearchOutcome>)> {
    match &scenario.kernels {
        KernelChoice::Explicit(a) => Ok((a.clone(), scenario.workload.batch, None)),
        KernelChoice::Auto => {
            let w = &scenario.workload;
            let timer = ProfileTimer::new(
                device,
                &scenario.timing,
                model.spec(),
                WorkloadProfile {
                    distribution: w.distribution,
                    pooling: w.pooling,
                    batches: scenario.profile.batches,
                    seed: scenario.profile.seed,
                },
            );
            let ctx = SearchContext::new(model.spec(), &scenario.timing, scenario.resources, &timer);
            let space = SearchSpace {
                initial_batch: w.batch,
                max_batch: scenario.search.max_batch.max(w.batch),
                ..scenario.search.clone()
            };
            let out = search(&ctx, &space)?;
            Ok((out.assignment.clone(), out.batch, Some(out)))
        }
    }
}

/// Simulates `scenario` on a workload drawn from `seed`.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunOutput> {
    scenario.validate()?;
    let model = Model::random(scenario.model.clone(), scenario.weight_seed);
    let device = Device::provision(&model, scenario.geometry, scenario.placement)?;
    let queries = if scenario.workload.queries == 0 {
        Vec::new()
    } else {
        let w = &scenario.workload;
        generate_workload(&scenario.model, w.distribution, w.pooling, w.queries, seed)?
    };
    let mut r = match scenario.mode {
        Mode::RmSsd => {
            let (a, batch, found) = resolve_kernels(scenario, &model, &device)?;
            let mut r = run_rmssd(scenario, &model, &device, &queries, &a, batch)?;
            r.search = found;
            r
        }
        Mode::EmbVectorSum => run_emb_vector_sum(scenario, &model, &device, &queries)?,
        Mode::SsdS { dram_fraction } => run_ssd_s(scenario, &model, &device, &queries, dram_fraction, seed)?,
    };
    r.metrics.seed = seed;
    Ok(r)
}

/// Bookkeeping shared by the three runners.
struct Recorder {
    n: usize,
    issued: usize,
    scores: Vec<Option<f32>>,
    latencies: Vec<Option<SimTime>>,
    traces: Vec<TraceRow>,
    die_busy: Vec<SimTime>,
    ev_requests: u64,
    page_reads: u64,
    flash_events: u64,
    check: FunctionalCheck,
    last_done: SimTime,
}

impl Recorder {
    fn new(n: usize, dies: usize) -> Self {
        Recorder {
            n,
            issued: 0,
            scores: vec![None; n],
            latencies: vec![None; n],
            traces: Vec::new(),
            die_busy: vec![SimTime::ZERO; dies],
            ev_requests: 0,
            page_reads: 0,
            flash_events: 0,
            check: FunctionalCheck::default(),
            last_done: SimTime::ZERO,
        }
    }

    fn trace(&mut self, query: usize, stage: Stage, start: SimTime, end: SimTime) {
        self.traces.push(TraceRow { query, stage, start, end });
    }

    fn absorb_lookup(&mut self, out: &LookupOutcome) {
        self.ev_requests += out.stats.ev_requests as u64;
        self.page_reads += out.stats.page_reads as u64;
        self.flash_events += out.stats.events;
        for (a, b) in self.die_busy.iter_mut().zip(&out.stats.die_busy) {
            *a += *b;
        }
    }

    /// Records a score; `exact` says whether it is bit-identical to the
    /// reference in its own order, and `strict` whether only exact counts.
    fn score(&mut self, q: usize, score: f32, reference: f32, exact: bool, strict: bool) {
        let e = rel_err(score, reference);
        self.check.checked += 1;
        self.check.exact += exact as usize;
        self.check.max_rel_err = self.check.max_rel_err.max(e);
        if (strict && !exact) || e > SCORE_TOLERANCE {
            self.check.mismatches += 1;
        }
        self.scores[q] = Some(score);
    }

    fn complete(&mut self, q: usize, issue: SimTime, done: SimTime) {
        self.latencies[q] = Some(done - issue);
        self.last_done = self.last_done.max(done);
    }

    fn finish(self, scenario: &Scenario, horizon: Option<SimTime>, extra: Extra) -> RunOutput {
        let done: Vec<SimTime> = self.latencies.iter().flatten().copied().collect();
        let completed = done.len();
        let horizon = horizon.unwrap_or(self.last_done);
        let throughput = if horizon > SimTime::ZERO {
            completed as f64 / (horizon.as_ps() as f64 * 1e-12)
        } else {
            0.0
        };
        let lookups = extra.dram_hits + extra.dram_misses;
        let metrics = Metrics {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.name.clone(),
            mode: scenario.mode.label(),
            model: scenario.model.name().to_string(),
            seed: 0,
            queries: self.n,
            issued: self.issued,
            completed,
            in_flight: self.issued - completed,
            horizon_ns: horizon.as_ns_f64(),
            throughput_qps: throughput,
            latency: LatencySummary::from_latencies(&done),
            channel_utilization: channel_utilization(&self.die_busy, &scenario.geometry, horizon),
            ev_requests: self.ev_requests,
            flash_page_reads: self.page_reads,
            dram_hits: extra.dram_hits,
            dram_misses: extra.dram_misses,
            miss_rate: (lookups > 0).then(|| extra.dram_misses as f64 / lookups as f64),
            batch: extra.batch,
            kernels: extra.kernels.clone(),
            resources: extra
                .kernels
                .as_ref()
                .map(|a| resource_usage(&scenario.model, a, &scenario.resources)),
            events: extra.events + self.flash_events,
            functional: self.check,
        };
        RunOutput {
            metrics,
            traces: self.traces,
            scores: self.scores,
            latencies: self.latencies,
            search: None,
        }
    }
}

#[derive(Default)]
struct Extra {
    dram_hits: u64,
    dram_misses: u64,
    batch: usize,
    kernels: Option<KernelAssignment>,
    events: u64,
}

/// Bytes the host sends per query: dense features plus 32-bit indices.
fn command_bytes(q: &Query) -> usize {
    (q.dense.len() + q.lookups()) * 4
}

#[derive(Debug, Clone, Copy)]
enum BatchEvent {
    Issue(usize),
    Stage1Done(usize),
    Stage2Ready(usize),
    Stage2Done(usize),
    Complete(usize),
}

struct Batch {
    range: std::ops::Range<usize>,
    issue: SimTime,
    start: SimTime,
}

fn batches_of(n: usize, batch: usize) -> Vec<Batch> {
    (0..n.div_ceil(batch))
        .map(|k| Batch {
            range: k * batch..((k + 1) * batch).min(n),
            issue: SimTime::ZERO,
            start: SimTime::ZERO,
        })
        .collect()
}

fn within<K>(q: &EventQueue<K>, horizon: Option<SimTime>) -> bool {
    match (q.peek_time(), horizon) {
        (None, _) => false,
        (Some(t), Some(h)) => t <= h,
        (Some(_), None) => true,
    }
}

/// Device batches pass through two stages. Stage 1 runs the embedding
/// lookups alongside the bottom chain (bottom MLP and the bottom-fed part
/// of the first top layer); stage 2 runs the top chain. The host issues
/// the next batch as soon as stage 1 frees, so stage 2 of one batch
/// overlaps stage 1 of the next.
fn run_rmssd(
    scenario: &Scenario,
    model: &Model,
    device: &Device,
    queries: &[Query],
    a: &KernelAssignment,
    batch: usize,
) -> Result<RunOutput> {
    let timing = &scenario.timing;
    let place = place_weights(model.spec(), &scenario.resources);
    let plans = StagePlans::build(model.spec(), a, &place.bottom_floor, &place.top_floor)?;
    let engine = EvEngine::new(device, timing, model.spec().ev_dim(), a.kc_e);
    let order = a.block_order();
    let stages = DeviceStages::new(model, a)?;
    let mut stage_times: HashMap<usize, (SimTime, SimTime)> = HashMap::new();
    let mut times = |n: usize| -> Result<(SimTime, SimTime)> {
        if let Some(t) = stage_times.get(&n) {
            return Ok(*t);
        }
        let t = plans.times(n, timing)?;
        stage_times.insert(n, t);
        Ok(t)
    };
    let mut rec = Recorder::new(queries.len(), scenario.geometry.dies());
    let mut batches = batches_of(queries.len(), batch);
    let mut eq: EventQueue<BatchEvent> = EventQueue::new();
    let mut stage2_wait: VecDeque<usize> = VecDeque::new();
    let mut stage2_busy = false;
    let horizon = scenario.workload.horizon;
    if !batches.is_empty() {
        eq.schedule(SimTime::ZERO, BatchEvent::Issue(0));
    }

    while within(&eq, horizon) {
        let ev = eq.pop().expect("peeked");
        let now = ev.at;
        match ev.kind {
            BatchEvent::Issue(k) => {
                let b = &mut batches[k];
                let qs = &queries[b.range.clone()];
                let cmd = timing.host_overhead() + timing.host_transfer(qs.iter().map(command_bytes).sum());
                b.issue = now;
                b.start = now + cmd;
                let lookup = engine.simulate_lookup(qs, b.start)?;
                let bot = b.start + times(qs.len())?.0;
                let emb = lookup.queries.iter().map(|q| q.done).max().unwrap_or(b.start);
                rec.issued += qs.len();
                for (i, q) in b.range.clone().zip(qs) {
                    let partial = stages.bottom(&q.dense)?;
                    let score = stages.top(partial, &lookup.queries[i - b.range.start].pooled)?;
                    let exact = score.to_bits() == reference_inference_blocked(model, q, &order)?.to_bits();
                    rec.score(i, score, reference_inference(model, q)?, exact, true);
                    rec.trace(i, Stage::Command, now, b.start);
                    rec.trace(i, Stage::Embedding, b.start, lookup.queries[i - b.range.start].done);
                    rec.trace(i, Stage::BottomMlp, b.start, bot);
                }
                rec.absorb_lookup(&lookup);
                eq.schedule(emb.max(bot), BatchEvent::Stage1Done(k));
            }
            BatchEvent::Stage1Done(k) => {
                if k + 1 < batches.len() {
                    eq.schedule(now, BatchEvent::Issue(k + 1));
                }
                eq.schedule(now, BatchEvent::Stage2Ready(k));
            }
            BatchEvent::Stage2Ready(k) => {
                stage2_wait.push_back(k);
            }
            BatchEvent::Stage2Done(k) => {
                stage2_busy = false;
                let n = batches[k].range.len();
                eq.schedule(now + timing.host_transfer(n * 4), BatchEvent::Complete(k));
                for i in batches[k].range.clone() {
                    rec.trace(i, Stage::Result, now, now + timing.host_transfer(n * 4));
                }
            }
            BatchEvent::Complete(k) => {
                let b = &batches[k];
                for i in b.range.clone() {
                    rec.complete(i, b.issue, now);
                }
            }
        }
        if !stage2_busy {
            if let Some(k) = stage2_wait.pop_front() {
                stage2_busy = true;
                let n = batches[k].range.len();
                let end = now + times(n)?.1;
                for i in batches[k].range.clone() {
                    rec.trace(i, Stage::TopMlp, now, end);
                }
                eq.schedule(end, BatchEvent::Stage2Done(k));
            }
        }
    }
    let events = eq.processed();
    Ok(rec.finish(
        scenario,
        horizon,
        Extra {
            batch,
            kernels: Some(a.clone()),
            events,
            ..Extra::default()
        },
    ))
}

/// Host-side scoring from pooled embeddings in the sequential order.
fn host_score(model: &Model, q: &Query, pooled: &[f32]) -> Result<f32> {
    let mut x = bottom_forward(model, &q.dense)?;
    x.extend_from_slice(pooled);
    Ok(mlp_forward(model.top(), &x, Activation::Linear)?[0])
}

/// The device runs lookups and EV sums for one batch at a time and returns
/// pooled vectors; the host runs both MLPs, overlapping the device's next
/// batch.
fn run_emb_vector_sum(scenario: &Scenario, model: &Model, device: &Device, queries: &[Query]) -> Result<RunOutput> {
    let timing = &scenario.timing;
    let spec = model.spec();
    let kc_e = match &scenario.kernels {
        KernelChoice::Explicit(a) => a.kc_e,
        KernelChoice::Auto => crate::mlp_engine::KernelAssignment::maximal(spec).kc_e,
    };
    let engine = EvEngine::new(device, timing, spec.ev_dim(), kc_e);
    let shapes: Vec<(usize, usize)> = spec.bottom_shapes().into_iter().chain(spec.top_shapes()).collect();
    let batch = scenario.workload.batch;
    let mut rec = Recorder::new(queries.len(), scenario.geometry.dies());
    let mut batches = batches_of(queries.len(), batch);
    let mut eq: EventQueue<BatchEvent> = EventQueue::new();
    let mut host_wait: VecDeque<usize> = VecDeque::new();
    let mut host_busy = false;
    let horizon = scenario.workload.horizon;
    if !batches.is_empty() {
        eq.schedule(SimTime::ZERO, BatchEvent::Issue(0));
    }

    while within(&eq, horizon) {
        let ev = eq.pop().expect("peeked");
        let now = ev.at;
        match ev.kind {
            BatchEvent::Issue(k) => {
                let b = &mut batches[k];
                let qs = &queries[b.range.clone()];
                let cmd = timing.host_overhead() + timing.host_transfer(qs.iter().map(command_bytes).sum());
                b.issue = now;
                b.start = now + cmd;
                let lookup = engine.simulate_lookup(qs, b.start)?;
                let emb = lookup.queries.iter().map(|q| q.done).max().unwrap_or(b.start);
                rec.issued += qs.len();
                for (i, q) in b.range.clone().zip(qs) {
                    let score = host_score(model, q, &lookup.queries[i - b.range.start].pooled)?;
                    let reference = reference_inference(model, q)?;
                    rec.score(i, score, reference, score.to_bits() == reference.to_bits(), false);
                    rec.trace(i, Stage::Command, now, b.start);
                    rec.trace(i, Stage::Embedding, b.start, lookup.queries[i - b.range.start].done);
                }
                rec.absorb_lookup(&lookup);
                eq.schedule(emb, BatchEvent::Stage1Done(k));
            }
            BatchEvent::Stage1Done(k) => {
                if k + 1 < batches.len() {
                    eq.schedule(now, BatchEvent::Issue(k + 1));
                }
                let n = batches[k].range.len();
                let xfer = timing.host_transfer(n * spec.embedding_width() * 4);
                for i in batches[k].range.clone() {
                    rec.trace(i, Stage::Transfer, now, now + xfer);
                }
                eq.schedule(now + xfer, BatchEvent::Stage2Ready(k));
            }
            BatchEvent::Stage2Ready(k) => host_wait.push_back(k),
            BatchEvent::Stage2Done(k) => {
                host_busy = false;
                eq.schedule(now, BatchEvent::Complete(k));
            }
            BatchEvent::Complete(k) => {
                let b = &batches[k];
                for i in b.range.clone() {
                    rec.complete(i, b.issue, now);
                }
            }
        }
        if !host_busy {
            if let Some(k) = host_wait.pop_front() {
                host_busy = true;
                let end = now + timing.host_mlp_time(&shapes, batches[k].range.len());
                for i in batches[k].range.clone() {
                    rec.trace(i, Stage::HostMlp, now, end);
                }
                eq.schedule(end, BatchEvent::Stage2Done(k));
            }
        }
    }
    let events = eq.processed();
    Ok(rec.finish(
        scenario,
        horizon,
        Extra {
            batch,
            events,
            ..Extra::default()
        },
    ))
}

/// Rows of each table kept in host DRAM: `floor(fraction · rows)` per
/// table. Under Zipf the hottest (lowest) indices; under Uniform a seeded
/// random subset.
pub fn resident_rows(model: &Model, dist: IndexDistribution, fraction: f64, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_D7A3_0000_0001);
    model
        .spec()
        .tables()
        .iter()
        .map(|t| {
            let k = ((fraction * t.rows as f64).floor() as usize).min(t.rows);
            let mut resident = vec![false; t.rows];
            match dist {
                IndexDistribution::Zipf { .. } => resident[..k].fill(true),
                IndexDistribution::Uniform => {
                    for i in sample(&mut rng, t.rows, k) {
                        resident[i] = true;
                    }
                }
            }
            resident
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum HostEvent {
    Issue(usize),
    Lookup(usize, usize),
    MlpDone(usize),
}

/// Host-only inference, one query at a time. Each lookup either hits host
/// DRAM or becomes a synchronous block read of the LBAs holding the row.
fn run_ssd_s(
    scenario: &Scenario,
    model: &Model,
    device: &Device,
    queries: &[Query],
    fraction: f64,
    seed: u64,
) -> Result<RunOutput> {
    let timing = &scenario.timing;
    let spec = model.spec();
    let g = scenario.geometry;
    let ev_bytes = spec.ev_dim() * 4;
    let resident = resident_rows(model, scenario.workload.distribution, fraction, seed);
    let shapes: Vec<(usize, usize)> = spec.bottom_shapes().into_iter().chain(spec.top_shapes()).collect();
    let mlp = timing.host_mlp_time(&shapes, 1);
    let page_read = timing.page_read_time(g.page_size);
    let mut read_cost: HashMap<(u64, usize), SimTime> = HashMap::new();
    let mut rec = Recorder::new(queries.len(), g.dies());
    let mut extra = Extra {
        batch: 1,
        ..Extra::default()
    };
    let mut eq: EventQueue<HostEvent> = EventQueue::new();
    let horizon = scenario.workload.horizon;
    let mut issue_at = vec![SimTime::ZERO; queries.len()];
    // flattened (table, position) per query
    let flat: Vec<Vec<(usize, usize)>> = queries
        .iter()
        .map(|q| {
            q.indices
                .iter()
                .enumerate()
                .flat_map(|(t, ix)| ix.iter().map(move |&i| (t, i)))
                .collect()
        })
        .collect();
    if !queries.is_empty() {
        eq.schedule(SimTime::ZERO, HostEvent::Issue(0));
    }

    while within(&eq, horizon) {
        let ev = eq.pop().expect("peeked");
        let now = ev.at;
        match ev.kind {
            HostEvent::Issue(q) => {
                rec.issued += 1;
                issue_at[q] = now;
                let pooled = fetch_pooled(model, device, &queries[q])?;
                let score = host_score(model, &queries[q], &pooled)?;
                let reference = reference_inference(model, &queries[q])?;
                rec.score(q, score, reference, score.to_bits() == reference.to_bits(), false);
                eq.schedule(now, HostEvent::Lookup(q, 0));
            }
            HostEvent::Lookup(q, j) => {
                if j == flat[q].len() {
                    rec.trace(q, Stage::Lookups, issue_at[q], now);
                    rec.trace(q, Stage::HostMlp, now, now + mlp);
                    eq.schedule(now + mlp, HostEvent::MlpDone(q));
                    continue;
                }
                let (t, i) = flat[q][j];
                let cost = if resident[t][i] {
                    extra.dram_hits += 1;
                    timing.dram_hit()
                } else {
                    extra.dram_misses += 1;
                    let (page_lba, off) = device.extents.translate_index(t, i)?;
                    let lba_size = g.lba_size;
                    let first = page_lba + (off / lba_size) as u64;
                    let last = page_lba + ((off + ev_bytes - 1) / lba_size) as u64;
                    let len = (last - first + 1) as usize * lba_size;
                    let addr = device.ftl.translate(first)?;
                    rec.die_busy[g.die_index(addr.channel, addr.die)] += page_read;
                    rec.page_reads += 1;
                    match read_cost.get(&(first, len)) {
                        Some(c) => *c,
                        None => {
                            let c = host_block_read(&device.ftl, timing, first, len)?;
                            read_cost.insert((first, len), c);
                            c
                        }
                    }
                };
                eq.schedule(now + cost, HostEvent::Lookup(q, j + 1));
            }
            HostEvent::MlpDone(q) => {
                rec.complete(q, issue_at[q], now);
                if q + 1 < queries.len() {
                    eq.schedule(now, HostEvent::Issue(q + 1));
                }
            }
        }
    }
    extra.events = eq.processed();
    Ok(rec.finish(scenario, horizon, extra))
}

/// Pooled vectors read back from the device image, folded in position
/// order.
fn fetch_pooled(model: &Model, device: &Device, q: &Query) -> Result<Vec<f32>> {
    let dim = model.spec().ev_dim();
    let mut out = Vec::with_capacity(dim * q.indices.len());
    for (t, ix) in q.indices.iter().enumerate() {
        let mut acc = vec![0.0f32; dim];
        for &i in ix {
            let (lba, off) = device.extents.translate_index(t, i)?;
            for (a, v) in acc.iter_mut().zip(device.image.read_ev(lba, off, dim)) {
                *a += v;
            }
        }
        out.extend(acc);
    }
    Ok(out)
}
