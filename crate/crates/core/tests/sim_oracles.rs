mod common;

use std::sync::OnceLock;

use common::{batch_oracle, channel_greedy_oracle, stripe, tick_schedule_oracle};
use proptest::prelude::*;
use rmssd::ev_engine::{Device, Placement};
use rmssd::kernel_search::place_weights;
use rmssd::mlp_engine::KernelAssignment;
use rmssd::recmodel::{generate_workload, IndexDistribution, Model, ModelSpec, Query, TableSpec};
use rmssd::sim::{
    compare, nearest_rank, resident_rows, run, traces_csv, KernelChoice, LatencySummary, Mode, RunOutput, Scenario,
};
use rmssd::SimTime;

fn desk(preset: &str, mode: Mode) -> Scenario {
    Scenario::desk(preset, mode).unwrap()
}

fn summary_ps(lat: &[u64]) -> LatencySummary {
    LatencySummary::from_latencies(&lat.iter().map(|&p| SimTime::from_ps(p)).collect::<Vec<_>>())
}

fn latencies_ps(r: &RunOutput) -> Vec<u64> {
    r.latencies.iter().map(|l| l.unwrap().as_ps()).collect()
}

/// Chains of `(R, C, kr, kc)` for the device's bottom and top stages.
fn chains(spec: &ModelSpec, a: &KernelAssignment) -> (Vec<(usize, usize, usize, usize)>, Vec<(usize, usize, usize, usize)>) {
    let b = spec.bottom_shapes();
    let t = spec.top_shapes();
    let mut bottom: Vec<_> = b.iter().zip(&a.bottom).map(|(&(r, c), k)| (r, c, k.kr, k.kc)).collect();
    bottom.push((spec.bottom_out(), t[0].1, a.top[0].kr, a.top[0].kc));
    let mut top = vec![(spec.embedding_width(), t[0].1, a.top[0].kr, a.top[0].kc)];
    top.extend(t[1..].iter().zip(&a.top[1..]).map(|(&(r, c), k)| (r, c, k.kr, k.kc)));
    (bottom, top)
}

fn command_bytes(q: &Query) -> usize {
    (q.dense.len() + q.indices.iter().map(Vec::len).sum::<usize>()) * 4
}

/// Straight-line replay of the in-storage pipeline: batches issue when the
/// previous batch leaves stage 1, stage 2 serves batches in order.
fn rmssd_replay(s: &Scenario, seed: u64, a: &KernelAssignment, batch: usize) -> Vec<u64> {
    let t = s.timing;
    let model = Model::random(s.model.clone(), s.weight_seed);
    let dev = Device::provision(&model, s.geometry, s.placement).unwrap();
    let w = s.workload;
    let qs = generate_workload(&s.model, w.distribution, w.pooling, w.queries, seed).unwrap();
    let (bot_chain, top_chain) = chains(&s.model, a);
    let mut lat = vec![0u64; qs.len()];
    let (mut issue, mut stage2_free) = (0u64, 0u64);
    for (k, chunk) in qs.chunks(batch).enumerate() {
        let n = chunk.len();
        let cmd = t.host_overhead().as_ps() + t.host_transfer(chunk.iter().map(command_bytes).sum()).as_ps();
        let start = issue + cmd;
        let emb = *batch_oracle(&dev, &t, &s.model, a.kc_e, chunk, start).iter().max().unwrap();
        let bot = start + t.cycles(tick_schedule_oracle(&bot_chain, n as u64)).as_ps();
        let s1 = emb.max(bot);
        let s2_start = s1.max(stage2_free);
        stage2_free = s2_start + t.cycles(tick_schedule_oracle(&top_chain, n as u64)).as_ps();
        let done = stage2_free + t.host_transfer(4 * n).as_ps();
        for i in 0..n {
            lat[k * batch + i] = done - issue;
        }
        issue = s1;
    }
    lat
}

#[test]
fn rmssd_matches_replay_oracle() {
    let s = desk("rmc3-mini", Mode::RmSsd);
    assert_eq!(s.workload.queries, 10_000);
    let r = run(&s, 9).unwrap();
    let placed = place_weights(&s.model, &s.resources);
    assert_eq!(placed.dram, 0, "replay oracle assumes all weights on chip");
    let a = r.metrics.kernels.clone().unwrap();
    let want = rmssd_replay(&s, 9, &a, r.metrics.batch);
    assert_eq!(latencies_ps(&r), want);
    assert_eq!(r.metrics.latency, summary_ps(&want));
    assert_eq!(r.metrics.completed, 10_000);
    assert_eq!(r.metrics.functional.mismatches, 0);
}

#[test]
fn rmssd_replay_with_explicit_kernels_and_batches() {
    let mut s = desk("wnd-mini", Mode::RmSsd);
    s.workload.queries = 300;
    s.workload.distribution = IndexDistribution::Zipf { s: 1.05 };
    s.placement = Placement::Fragmented { pieces: 3, seed: 4 };
    for (batch, a) in [(1, KernelAssignment::maximal(&s.model)), (7, KernelAssignment::minimal(&s.model))] {
        s.workload.batch = batch;
        s.kernels = KernelChoice::Explicit(a.clone());
        let r = run(&s, 5).unwrap();
        assert_eq!(latencies_ps(&r), rmssd_replay(&s, 5, &a, batch), "batch {batch}");
    }
}

#[test]
fn emb_vector_sum_matches_replay_oracle() {
    let mut s = desk("ncf-mini", Mode::EmbVectorSum);
    s.workload.queries = 500;
    s.workload.batch = 4;
    let t = s.timing;
    let r = run(&s, 2).unwrap();
    let model = Model::random(s.model.clone(), s.weight_seed);
    let dev = Device::provision(&model, s.geometry, s.placement).unwrap();
    let qs = generate_workload(&s.model, s.workload.distribution, s.workload.pooling, 500, 2).unwrap();
    let shapes: Vec<_> = s.model.bottom_shapes().into_iter().chain(s.model.top_shapes()).collect();
    let kc_e = 1usize << (usize::BITS - 1 - s.model.ev_dim().leading_zeros());
    let (mut issue, mut host_free) = (0u64, 0u64);
    let mut want = vec![0u64; qs.len()];
    for (k, chunk) in qs.chunks(4).enumerate() {
        let n = chunk.len();
        let start = issue + t.host_overhead().as_ps() + t.host_transfer(chunk.iter().map(command_bytes).sum()).as_ps();
        let emb = *batch_oracle(&dev, &t, &s.model, kc_e, chunk, start).iter().max().unwrap();
        let arrive = emb + t.host_transfer(n * s.model.embedding_width() * 4).as_ps();
        host_free = arrive.max(host_free) + t.host_mlp_time(&shapes, n).as_ps();
        for i in 0..n {
            want[k * 4 + i] = host_free - issue;
        }
        issue = emb;
    }
    assert_eq!(latencies_ps(&r), want);
}

/// Closed-loop host inference with a Zipf-hot resident prefix, replayed
/// without an event queue.
#[test]
fn ssd_s_matches_replay_oracle() {
    let f = 0.25;
    let mut s = desk("rmc3-mini", Mode::SsdS { dram_fraction: f });
    s.workload.queries = 400;
    s.workload.distribution = IndexDistribution::Zipf { s: 0.9 };
    let t = s.timing;
    let g = s.geometry;
    let r = run(&s, 3).unwrap();
    let model = Model::random(s.model.clone(), s.weight_seed);
    let dev = Device::provision(&model, g, s.placement).unwrap();
    let qs = generate_workload(&s.model, s.workload.distribution, s.workload.pooling, 400, 3).unwrap();
    let shapes: Vec<_> = s.model.bottom_shapes().into_iter().chain(s.model.top_shapes()).collect();
    let ev = s.model.ev_dim() * 4;
    let rows_per_page = g.page_size / ev;
    let mut want = Vec::new();
    let (mut hits, mut misses) = (0u64, 0u64);
    for q in &qs {
        let mut lat = 0u64;
        for (ti, idx) in q.indices.iter().enumerate() {
            let rows = s.model.tables()[ti].rows;
            for &i in idx {
                if i < (f * rows as f64).floor() as usize {
                    hits += 1;
                    lat += t.dram_hit().as_ps();
                } else {
                    misses += 1;
                    let (page_lba, off) = common::linear_scan_locate(&dev.files[ti], rows, ev, &g, i).unwrap();
                    assert!(off + ev <= rows_per_page * ev);
                    let (c, d, _) = stripe(&g, page_lba);
                    let lbas = (off + ev - 1) / g.lba_size - off / g.lba_size + 1;
                    lat += channel_greedy_oracle(&g, &t, &[(c, d)], 0)[0]
                        + t.host_transfer(lbas * g.lba_size).as_ps()
                        + t.host_overhead().as_ps();
                }
            }
        }
        want.push(lat + t.host_mlp_time(&shapes, 1).as_ps());
    }
    assert_eq!(latencies_ps(&r), want);
    assert_eq!((r.metrics.dram_hits, r.metrics.dram_misses), (hits, misses));
    assert_eq!(r.metrics.flash_page_reads, misses);
    let total: u64 = want.iter().sum();
    assert_eq!(r.metrics.horizon_ns, SimTime::from_ps(total).as_ns_f64());
}

#[test]
fn full_dram_baseline_never_touches_flash() {
    let mut s = desk("ncf-mini", Mode::SsdS { dram_fraction: 1.0 });
    s.workload.queries = 200;
    let r = run(&s, 1).unwrap();
    assert_eq!(r.metrics.flash_page_reads, 0);
    assert_eq!(r.metrics.dram_misses, 0);
    assert!(r.metrics.channel_utilization.iter().all(|&u| u == 0.0));
    let shapes: Vec<_> = s.model.bottom_shapes().into_iter().chain(s.model.top_shapes()).collect();
    let lookups = (s.workload.pooling * s.model.table_count()) as u64;
    let each = s.timing.dram_hit().as_ps() * lookups + s.timing.host_mlp_time(&shapes, 1).as_ps();
    assert!(latencies_ps(&r).iter().all(|&l| l == each));
}

#[test]
fn zero_queries_give_empty_metrics() {
    for mode in [Mode::RmSsd, Mode::EmbVectorSum, Mode::SsdS { dram_fraction: 0.5 }] {
        let mut s = desk("rmc3-mini", mode);
        s.workload.queries = 0;
        let m = run(&s, 1).unwrap().metrics;
        assert_eq!((m.issued, m.completed, m.in_flight), (0, 0, 0));
        assert_eq!(m.throughput_qps, 0.0);
        assert_eq!(m.latency, LatencySummary::default());
    }
}

fn harmonic(n: usize, s: f64) -> f64 {
    (1..=n).map(|k| (k as f64).powf(-s)).sum()
}

#[test]
fn miss_rate_matches_resident_set_expectation() {
    for (dist, f) in [
        (IndexDistribution::Uniform, 0.25),
        (IndexDistribution::Uniform, 0.6),
        (IndexDistribution::Zipf { s: 1.1 }, 0.25),
        (IndexDistribution::Zipf { s: 0.8 }, 0.1),
    ] {
        let mut s = desk("rmc3-mini", Mode::SsdS { dram_fraction: f });
        s.workload.distribution = dist;
        s.workload.queries = 200;
        let m = run(&s, 11).unwrap().metrics;
        assert!(m.dram_hits + m.dram_misses >= 10_000);
        let rows = s.model.tables()[0].rows;
        let k = (f * rows as f64).floor() as usize;
        let expect = match dist {
            IndexDistribution::Uniform => 1.0 - k as f64 / rows as f64,
            IndexDistribution::Zipf { s } => 1.0 - harmonic(k, s) / harmonic(rows, s),
        };
        let got = m.miss_rate.unwrap();
        assert!((got - expect).abs() <= 0.02, "{dist:?} f={f}: {got} vs {expect}");
    }
}

#[test]
fn uniform_resident_set_has_exact_size() {
    let model = Model::random(rmssd::recmodel::presets::ncf_mini(), 1);
    for f in [0.01, 0.25, 1.0] {
        let sets = resident_rows(&model, IndexDistribution::Uniform, f, 4);
        for (t, set) in model.spec().tables().iter().zip(&sets) {
            assert_eq!(set.iter().filter(|&&r| r).count(), (f * t.rows as f64).floor() as usize);
        }
    }
    assert_ne!(
        resident_rows(&model, IndexDistribution::Uniform, 0.3, 4),
        resident_rows(&model, IndexDistribution::Uniform, 0.3, 5)
    );
}

#[test]
fn horizon_conserves_queries() {
    for mode in [Mode::RmSsd, Mode::EmbVectorSum, Mode::SsdS { dram_fraction: 0.25 }] {
        let mut s = desk("ncf-mini", mode);
        s.workload.queries = 400;
        let full = run(&s, 6).unwrap().metrics;
        let h = SimTime::from_ns_f64(full.horizon_ns / 2.0);
        s.workload.horizon = Some(h);
        let r = run(&s, 6).unwrap();
        let m = &r.metrics;
        let issued = {
            let mut seen: Vec<usize> = r.traces.iter().map(|t| t.query).collect();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        };
        let completed = r.latencies.iter().filter(|l| l.is_some()).count();
        // the host baseline traces a query only once its lookups finish
        assert!(m.issued >= issued && m.issued <= issued + 1);
        assert_eq!(m.completed, completed);
        assert_eq!(m.issued, m.completed + m.in_flight);
        assert!(m.completed < 400 && m.completed > 0);
        assert_eq!(m.throughput_qps, m.completed as f64 / (h.as_ps() as f64 * 1e-12));
    }
}

#[test]
fn reruns_are_bit_identical() {
    for mode in [Mode::RmSsd, Mode::EmbVectorSum, Mode::SsdS { dram_fraction: 0.25 }] {
        let mut s = desk("wnd-mini", mode);
        s.workload.queries = 300;
        let a = run(&s, 8).unwrap();
        let b = run(&s, 8).unwrap();
        assert_eq!(serde_json::to_string(&a.metrics).unwrap(), serde_json::to_string(&b.metrics).unwrap());
        assert_eq!(traces_csv(&a.traces), traces_csv(&b.traces));
        let c = run(&s, 9).unwrap();
        assert_ne!(a.latencies, c.latencies);
    }
}

#[test]
fn every_mode_scores_like_the_reference() {
    for preset in rmssd::recmodel::presets::NAMES {
        for mode in [Mode::RmSsd, Mode::EmbVectorSum, Mode::SsdS { dram_fraction: 0.25 }] {
            let mut s = desk(preset, mode);
            s.workload.queries = 200;
            s.workload.batch = 3;
            let m = run(&s, 4).unwrap().metrics;
            assert_eq!(m.functional.checked, 200);
            assert_eq!(m.functional.mismatches, 0, "{preset} {mode:?}");
            assert!(m.functional.max_rel_err <= 1e-5);
            if mode == Mode::RmSsd {
                assert_eq!(m.functional.exact, 200);
            }
        }
    }
}

#[test]
fn quarter_dram_is_slower_than_full_dram() {
    let runs: Vec<_> = [1.0, 0.25]
        .into_iter()
        .map(|f| {
            let mut s = desk("rmc3-mini", Mode::SsdS { dram_fraction: f });
            s.workload.queries = 300;
            run(&s, 2).unwrap().metrics
        })
        .collect();
    assert!(runs[1].throughput_qps < runs[0].throughput_qps);
    assert!(runs[1].latency.p99_ns > runs[0].latency.p99_ns);
    let c = compare(&runs).unwrap();
    assert!(c.rows[1].throughput_ratio < 1.0);
}

#[test]
fn compare_against_itself_and_mismatches() {
    let mut s = desk("ncf-mini", Mode::EmbVectorSum);
    s.workload.queries = 100;
    let m = run(&s, 3).unwrap().metrics;
    let c = compare(&[m.clone(), m.clone()]).unwrap();
    for r in &c.rows {
        assert_eq!((r.throughput_ratio, r.p50_ratio, r.p99_ratio), (1.0, 1.0, 1.0));
    }
    assert!(c.to_text().lines().count() == 4);
    let mut other = desk("wnd-mini", Mode::EmbVectorSum);
    other.workload.queries = 100;
    let o = run(&other, 3).unwrap().metrics;
    assert!(compare(&[m.clone(), o]).is_err());
    let reseeded = run(&s, 4).unwrap().metrics;
    assert!(compare(&[m.clone(), reseeded]).is_err());
    assert!(compare(&[]).is_err());
}

#[test]
fn invalid_scenarios_fail_before_running() {
    for f in [0.0, -0.5, 1.5, f64::NAN] {
        assert!(run(&desk("rmc3-mini", Mode::SsdS { dram_fraction: f }), 1).is_err());
    }
    let mut s = desk("rmc3-mini", Mode::RmSsd);
    s.workload.batch = 0;
    assert!(run(&s, 1).is_err());
    let mut bad = KernelAssignment::minimal(&s.model);
    bad.bottom[0].kr = 3;
    s.workload.batch = 1;
    s.kernels = KernelChoice::Explicit(bad);
    assert!(run(&s, 1).is_err());
}

fn tiny_spec() -> &'static ModelSpec {
    static SPEC: OnceLock<ModelSpec> = OnceLock::new();
    SPEC.get_or_init(|| {
        ModelSpec::new("tiny", 3, vec![8, 4], vec![8, 1], vec![TableSpec { rows: 300, ev_dim: 4 }; 3]).unwrap()
    })
}

fn tiny_scenario(mode: Mode, queries: usize, batch: usize, pooling: usize, horizon_us: Option<u64>) -> Scenario {
    let mut s = desk("rmc3-mini", mode);
    s.model = tiny_spec().clone();
    s.kernels = KernelChoice::Explicit(KernelAssignment::minimal(&s.model));
    s.workload.queries = queries;
    s.workload.batch = batch;
    s.workload.pooling = pooling;
    s.workload.horizon = horizon_us.map(|u| SimTime::from_ns(u * 1000));
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn percentiles_are_ordered_nearest_ranks(lat in proptest::collection::vec(0u64..10_000_000, 1..200)) {
        let ts: Vec<SimTime> = lat.iter().map(|&p| SimTime::from_ps(p)).collect();
        let l = LatencySummary::from_latencies(&ts);
        prop_assert!(l.p50_ns <= l.p95_ns && l.p95_ns <= l.p99_ns && l.p99_ns <= l.max_ns);
        let mut sorted = lat.clone();
        sorted.sort_unstable();
        for p in [50.0, 95.0, 99.0] {
            let rank = ((p / 100.0 * sorted.len() as f64).ceil() as usize).max(1);
            let sorted_t: Vec<SimTime> = sorted.iter().map(|&x| SimTime::from_ps(x)).collect();
            prop_assert_eq!(nearest_rank(&sorted_t, p).as_ps(), sorted[rank - 1]);
            let below = sorted.iter().filter(|&&x| x <= sorted[rank - 1]).count();
            prop_assert!(below as f64 >= p / 100.0 * sorted.len() as f64);
        }
    }

    #[test]
    fn small_runs_keep_metric_invariants(
        mode_pick in 0usize..3,
        f in 0.05f64..1.0,
        queries in 1usize..24,
        batch in 1usize..6,
        pooling in 1usize..5,
        horizon in proptest::option::of(50u64..3000),
        seed in 0u64..1000,
    ) {
        let mode = match mode_pick {
            0 => Mode::RmSsd,
            1 => Mode::EmbVectorSum,
            _ => Mode::SsdS { dram_fraction: f },
        };
        let r = run(&tiny_scenario(mode, queries, batch, pooling, horizon), seed).unwrap();
        let m = &r.metrics;
        prop_assert!(m.latency.p50_ns <= m.latency.p95_ns);
        prop_assert!(m.latency.p95_ns <= m.latency.p99_ns);
        prop_assert!(m.latency.p99_ns <= m.latency.max_ns);
        prop_assert_eq!(m.issued, m.completed + m.in_flight);
        prop_assert!(m.issued <= queries);
        if horizon.is_none() {
            prop_assert_eq!(m.completed, queries);
        }
        prop_assert_eq!(m.functional.mismatches, 0);
        prop_assert!(m.channel_utilization.iter().all(|u| (0.0..=1.0).contains(u)));
        for t in &r.traces {
            prop_assert!(t.start <= t.end);
        }
        if m.horizon_ns > 0.0 {
            let want = m.completed as f64 / (m.horizon_ns * 1e-9);
            prop_assert!((m.throughput_qps - want).abs() <= 1e-12 * want);
        }
    }
}
