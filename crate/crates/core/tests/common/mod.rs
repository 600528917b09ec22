//! Independent oracles shared by integration tests. Nothing here calls the
//! code paths it is used to check.
#![allow(dead_code)]

pub mod search;

use std::collections::HashMap;

use rmssd::ev_engine::{Device, FileExtent};
use rmssd::recmodel::{ModelSpec, Query};
use rmssd::storage::{SsdGeometry, TimingParams};

/// Per-read completion times (ps) for reads that all arrive at `start`:
/// per channel, the bus serves whichever die finishes sensing first (lowest
/// die on ties); a die senses its next page when its last transfer ends.
pub fn channel_greedy_oracle(g: &SsdGeometry, t: &TimingParams, targets: &[(usize, usize)], start: u64) -> Vec<u64> {
    let sense = t.sense_time().as_ps();
    let xfer = t.channel_transfer(g.page_size).as_ps();
    let mut done = vec![0u64; targets.len()];
    for ch in 0..g.channels {
        let mut queues: Vec<Vec<usize>> = vec![Vec::new(); g.dies_per_channel];
        for (i, &(c, d)) in targets.iter().enumerate() {
            if c == ch {
                queues[d].push(i);
            }
        }
        let mut head = vec![0usize; g.dies_per_channel];
        let mut ready = vec![start; g.dies_per_channel];
        let mut bus_free = start;
        loop {
            let mut pick: Option<(u64, usize)> = None;
            for d in 0..g.dies_per_channel {
                if head[d] < queues[d].len() {
                    let sensed = ready[d] + sense;
                    if pick.map_or(true, |(s, _)| sensed < s) {
                        pick = Some((sensed, d));
                    }
                }
            }
            let Some((sensed, d)) = pick else { break };
            let end = sensed.max(bus_free) + xfer;
            done[queues[d][head[d]]] = end;
            head[d] += 1;
            ready[d] = end;
            bus_free = end;
        }
    }
    done
}

/// `(page-start lba, in-page offset)` by scanning the file's extents in
/// file order.
pub fn linear_scan_locate(
    files: &[FileExtent],
    rows: usize,
    ev_bytes: usize,
    g: &SsdGeometry,
    index: usize,
) -> Option<(u64, usize)> {
    if index >= rows {
        return None;
    }
    let rpp = g.page_size / ev_bytes;
    let lpp = (g.page_size / g.lba_size) as u64;
    let file_page = (index / rpp) as u64;
    let mut first_page = 0u64;
    for e in files {
        let pages = e.lba_count / lpp;
        if file_page < first_page + pages {
            return Some((e.start_lba + (file_page - first_page) * lpp, (index % rpp) * ev_bytes));
        }
        first_page += pages;
    }
    None
}

/// `(channel, die, page-in-die)` for a page-start lba by the striping formula.
pub fn stripe(g: &SsdGeometry, lba: u64) -> (usize, usize, u64) {
    let p = lba * g.lba_size as u64 / g.page_size as u64;
    let c = g.channels as u64;
    let d = g.dies_per_channel as u64;
    ((p % c) as usize, ((p / c) % d) as usize, p / (c * d))
}

/// Single-adder completion times, one per stream. Each stream's arrivals
/// are in position order. Scans all streams every step for the earliest
/// pending arrival (lowest stream id on ties).
pub fn adder_oracle(streams: &[Vec<u64>], interval: u64) -> Vec<u64> {
    let mut next = vec![0usize; streams.len()];
    let mut done = vec![0u64; streams.len()];
    let mut free = 0u64;
    loop {
        let mut best: Option<(u64, usize)> = None;
        for (s, arr) in streams.iter().enumerate() {
            if next[s] < arr.len() {
                let a = arr[next[s]];
                if best.map_or(true, |(b, _)| a < b) {
                    best = Some((a, s));
                }
            }
        }
        let Some((a, s)) = best else { break };
        free = free.max(a) + interval;
        done[s] = free;
        next[s] += 1;
    }
    done
}

/// Chain makespan in cycles by ticking a clock one cycle at a time. Layers
/// alternate column / row scan starting with column; all first-layer
/// inputs are ready at cycle 0. Each entry is `(R, C, kr, kc)`.
pub fn tick_schedule_oracle(layers: &[(usize, usize, usize, usize)], batch: u64) -> u64 {
    let depth = |kr: usize| {
        let mut d = 0u64;
        while (1usize << d) < kr.max(2) {
            d += 1;
        }
        d
    };
    let mut ready: Vec<u64> = vec![0; layers[0].0];
    let mut end = 0;
    for (l, &(r, c, kr, kc)) in layers.iter().enumerate() {
        let blocks = r.div_ceil(kr) as u64;
        let groups = c.div_ceil(kc) as u64;
        let fill = depth(kr);
        let mut out = vec![0u64; c];
        if l % 2 == 0 {
            let start = *ready.iter().max().unwrap();
            for (o, slot) in out.iter_mut().enumerate() {
                let g = (o / kc) as u64;
                *slot = start + (g + 1) * blocks * batch + fill;
            }
            end = start + groups * blocks * batch + fill;
        } else {
            let mut t = 0u64;
            let mut next = 0usize;
            let mut busy_until = 0u64;
            loop {
                if t >= busy_until {
                    if next == blocks as usize {
                        break;
                    }
                    let lo = next * kr;
                    let hi = (lo + kr).min(r);
                    if ready[lo..hi].iter().all(|&x| x <= t) {
                        busy_until = t + groups * batch;
                        next += 1;
                        continue;
                    }
                }
                t += 1;
            }
            end = busy_until + fill;
            out.fill(end);
        }
        ready = out;
    }
    end
}

/// Pairwise reduction level by level, odd element carried.
pub fn pairwise(mut v: Vec<f32>) -> f32 {
    while v.len() > 1 {
        let mut next = Vec::with_capacity(v.len().div_ceil(2));
        let mut i = 0;
        while i < v.len() {
            next.push(if i + 1 < v.len() { v[i] + v[i + 1] } else { v[i] });
            i += 2;
        }
        v = next;
    }
    v.first().copied().unwrap_or(0.0)
}

/// Blocked FC accumulation for one output row over `segments` of the
/// input, each segment cut into blocks of `kr` from its own start.
pub fn blocked_dot(w: &[f32], x: &[f32], kr: usize, segments: &[(usize, usize)]) -> f32 {
    let mut acc = 0.0f32;
    for &(lo, hi) in segments {
        let mut s = lo;
        while s < hi {
            let e = (s + kr).min(hi);
            acc += pairwise((s..e).map(|i| w[i] * x[i]).collect());
            s = e;
        }
    }
    acc
}

/// Event-list oracle for a whole lookup batch, built from file extents,
/// the striping formula, the channel greedy rule and the scan adder.
pub fn batch_oracle(dev: &Device, t: &TimingParams, spec: &ModelSpec, kc_e: usize, qs: &[Query], issue: u64) -> Vec<u64> {
    let g = dev.geometry;
    let ev_bytes = spec.ev_dim() * 4;
    let mut page_ids: HashMap<u64, usize> = HashMap::new();
    let mut targets = Vec::new();
    let mut stream_pages: Vec<(usize, Vec<usize>)> = Vec::new();
    for (qi, q) in qs.iter().enumerate() {
        for (ti, idx) in q.indices.iter().enumerate() {
            let rows = spec.tables()[ti].rows;
            let pages = idx
                .iter()
                .map(|&i| {
                    let (lba, _) = linear_scan_locate(&dev.files[ti], rows, ev_bytes, &g, i).unwrap();
                    *page_ids.entry(lba).or_insert_with(|| {
                        let (c, d, _) = stripe(&g, lba);
                        targets.push((c, d));
                        targets.len() - 1
                    })
                })
                .collect();
            stream_pages.push((qi, pages));
        }
    }
    let page_done = channel_greedy_oracle(&g, t, &targets, issue);
    let interval = (spec.ev_dim().div_ceil(kc_e) as f64 * 1e6 / t.fc_clock_mhz).round() as u64;
    let streams: Vec<Vec<u64>> = stream_pages.iter().map(|(_, p)| p.iter().map(|&x| page_done[x]).collect()).collect();
    let done = adder_oracle(&streams, interval);
    let mut per_query = vec![issue; qs.len()];
    for ((qi, _), d) in stream_pages.iter().zip(done) {
        per_query[*qi] = per_query[*qi].max(d);
    }
    per_query
}

