//! EV-sum adder.
//!
//! One adder of width `kc_e` serves every (query, table) stream of a batch.
//! Adding one vector takes `ceil(ev_dim / kc_e)` cycles. Each stream is
//! accumulated in index-position order from a zero vector, which keeps the
//! result bit-identical to the functional lookup-sum; among streams, the
//! adder takes whichever next vector arrived first, ties going to the lower
//! (query, table).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::time::SimTime;

/// Vectors of one (query, table) pair in position order with their arrival
/// times from flash.
#[derive(Debug, Clone, PartialEq)]
pub struct SumStream {
    pub query: usize,
    pub table: usize,
    pub evs: Vec<(SimTime, Vec<f32>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SumResult {
    pub sum: Vec<f32>,
    pub last_arrival: SimTime,
    pub done: SimTime,
}

pub fn add_interval_cycles(ev_dim: usize, kc_e: usize) -> u64 {
    ev_dim.div_ceil(kc_e.max(1)) as u64
}

/// Runs the shared adder over `streams`; results are in stream order.
pub fn run_adder(streams: &[SumStream], ev_dim: usize, interval: SimTime) -> Result<Vec<SumResult>> {
    let mut heap = BinaryHeap::new();
    for (s, st) in streams.iter().enumerate() {
        let Some((t, _)) = st.evs.first() else {
            return Err(Error::param(format!(
                "query {} table {}: no embedding vectors fetched",
                st.query, st.table
            )));
        };
        heap.push(Reverse((*t, st.query, st.table, s, 0usize)));
    }
    let mut out: Vec<SumResult> = streams
        .iter()
        .map(|st| SumResult {
            sum: vec![0.0; ev_dim],
            last_arrival: st.evs.iter().map(|e| e.0).max().unwrap_or_default(),
            done: SimTime::ZERO,
        })
        .collect();
    let mut free = SimTime::ZERO;
    while let Some(Reverse((ready, q, t, s, k))) = heap.pop() {
        let v = &streams[s].evs[k].1;
        if v.len() != ev_dim {
            return Err(Error::shape("fetched embedding vector", ev_dim, v.len()));
        }
        let start = free.max(ready);
        free = start + interval;
        for (a, x) in out[s].sum.iter_mut().zip(v) {
            *a += *x;
        }
        out[s].done = free;
        if let Some((next, _)) = streams[s].evs.get(k + 1) {
            heap.push(Reverse((*next, q, t, s, k + 1)));
        }
    }
    Ok(out)
}

/// Sum for one query: concatenated per-table vectors and completion time.
pub fn ev_sum_engine(per_table: &[Vec<(SimTime, Vec<f32>)>], ev_dim: usize, interval: SimTime) -> Result<(Vec<f32>, SimTime)> {
    let streams: Vec<SumStream> = per_table
        .iter()
        .enumerate()
        .map(|(table, evs)| SumStream {
            query: 0,
            table,
            evs: evs.clone(),
        })
        .collect();
    let results = run_adder(&streams, ev_dim, interval)?;
    let done = results.iter().map(|r| r.done).max().unwrap_or_default();
    Ok((results.into_iter().flat_map(|r| r.sum).collect(), done))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concatenates_tables() {
        let per_table = vec![vec![(SimTime(0), vec![1.0, 2.0])], vec![(SimTime(0), vec![3.0, 4.0])]];
        let (v, _) = ev_sum_engine(&per_table, 2, SimTime(10)).unwrap();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn single_vector_passes_through() {
        let per_table = vec![vec![(SimTime(500), vec![-0.5, 7.0])]];
        let (v, done) = ev_sum_engine(&per_table, 2, SimTime(10)).unwrap();
        assert_eq!(v, vec![-0.5, 7.0]);
        assert_eq!(done, SimTime(510));
    }

    #[test]
    fn empty_stream_rejected() {
        assert!(ev_sum_engine(&[vec![]], 2, SimTime(1)).is_err());
    }

    #[test]
    fn interval_rounds_up() {
        assert_eq!(add_interval_cycles(16, 16), 1);
        assert_eq!(add_interval_cycles(16, 1), 16);
        assert_eq!(add_interval_cycles(16, 32), 1);
        assert_eq!(add_interval_cycles(12, 8), 2);
    }
}
