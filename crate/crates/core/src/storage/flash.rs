//! Event-driven flash array.
//!
//! Each die holds one outstanding read (single plane): it senses the page,
//! waits for its channel bus, transfers the page, and only then takes the
//! next request. Dies on a channel overlap sensing; the channel bus moves
//! one page at a time.
//!
//! Embedding reads have non-preemptive priority over block I/O. A die never
//! starts a block read while its channel has an embedding read that has not
//! started, and the bus arbitrates embedding transfers first.

use std::collections::VecDeque;

use serde::Serialize;

use super::{PhysAddr, SsdGeometry, TimingParams};
use crate::sim::EventQueue;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IoClass {
    Ev,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageRead {
    pub target: PhysAddr,
    pub class: IoClass,
    pub arrival: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PageCompletion {
    pub sense_start: SimTime,
    pub sense_end: SimTime,
    pub transfer_start: SimTime,
    pub done: SimTime,
}

#[derive(Debug, Clone, Default)]
pub struct FlashRun {
    /// One entry per submitted read, in submission order.
    pub completions: Vec<PageCompletion>,
    pub makespan: SimTime,
    /// Occupied time per die (sense start to transfer end), channel-major.
    pub die_busy: Vec<SimTime>,
    /// Bus occupancy per channel.
    pub bus_busy: Vec<SimTime>,
    pub events: u64,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Arrive(usize),
    SenseDone(usize),
    TransferDone(usize),
    Arbitrate(usize),
}

struct State<'a> {
    geometry: &'a SsdGeometry,
    reads: &'a [PageRead],
    sense: SimTime,
    transfer: SimTime,
    ev_queue: Vec<VecDeque<usize>>,
    blk_queue: Vec<VecDeque<usize>>,
    die_busy: Vec<bool>,
    bus_busy: Vec<bool>,
    bus_wait: Vec<Vec<usize>>,
    arb_pending: Vec<bool>,
    pending_ev: Vec<usize>,
    out: Vec<PageCompletion>,
}

impl State<'_> {
    fn die_of(&self, i: usize) -> usize {
        let t = self.reads[i].target;
        self.geometry.die_index(t.channel, t.die)
    }

    fn start_idle_dies(&mut self, ch: usize, q: &mut EventQueue<Ev>) {
        for d in 0..self.geometry.dies_per_channel {
            let die = self.geometry.die_index(ch, d);
            if self.die_busy[die] {
                continue;
            }
            let next = match self.ev_queue[die].pop_front() {
                Some(i) => {
                    self.pending_ev[ch] -= 1;
                    Some(i)
                }
                None if self.pending_ev[ch] == 0 => self.blk_queue[die].pop_front(),
                None => None,
            };
            if let Some(i) = next {
                self.die_busy[die] = true;
                self.out[i].sense_start = q.now();
                q.schedule_in(self.sense, Ev::SenseDone(i));
            }
        }
    }

    // Arbitration runs after every event already queued for this instant,
    // so simultaneous sense completions compete on equal terms.
    fn request_arbitration(&mut self, ch: usize, q: &mut EventQueue<Ev>) {
        if !self.arb_pending[ch] {
            self.arb_pending[ch] = true;
            q.schedule_in(SimTime::ZERO, Ev::Arbitrate(ch));
        }
    }

    fn arbitrate_bus(&mut self, ch: usize, q: &mut EventQueue<Ev>) {
        self.arb_pending[ch] = false;
        if self.bus_busy[ch] || self.bus_wait[ch].is_empty() {
            return;
        }
        let (pos, _) = self.bus_wait[ch]
            .iter()
            .enumerate()
            .min_by_key(|&(_, &i)| (self.reads[i].class, self.out[i].sense_end, self.die_of(i), i))
            .expect("non-empty");
        let i = self.bus_wait[ch].swap_remove(pos);
        self.bus_busy[ch] = true;
        self.out[i].transfer_start = q.now();
        q.schedule_in(self.transfer, Ev::TransferDone(i));
    }
}

/// Runs `reads` to completion on an initially idle array.
///
/// Requests that arrive together are queued in slice order.
pub fn simulate_reads(geometry: &SsdGeometry, timing: &TimingParams, reads: &[PageRead]) -> FlashRun {
    let dies = geometry.dies();
    let mut st = State {
        geometry,
        reads,
        sense: timing.sense_time(),
        transfer: timing.channel_transfer(geometry.page_size),
        ev_queue: vec![VecDeque::new(); dies],
        blk_queue: vec![VecDeque::new(); dies],
        die_busy: vec![false; dies],
        bus_busy: vec![false; geometry.channels],
        bus_wait: vec![Vec::new(); geometry.channels],
        arb_pending: vec![false; geometry.channels],
        pending_ev: vec![0; geometry.channels],
        out: vec![PageCompletion::default(); reads.len()],
    };
    let mut q = EventQueue::new();
    for (i, r) in reads.iter().enumerate() {
        q.schedule(r.arrival, Ev::Arrive(i));
    }

    while let Some(ev) = q.pop() {
        match ev.kind {
            Ev::Arrive(i) => {
                let ch = reads[i].target.channel;
                let die = st.die_of(i);
                match reads[i].class {
                    IoClass::Ev => {
                        st.ev_queue[die].push_back(i);
                        st.pending_ev[ch] += 1;
                    }
                    IoClass::Block => st.blk_queue[die].push_back(i),
                }
                st.start_idle_dies(ch, &mut q);
            }
            Ev::SenseDone(i) => {
                let ch = reads[i].target.channel;
                st.out[i].sense_end = q.now();
                st.bus_wait[ch].push(i);
                st.request_arbitration(ch, &mut q);
            }
            Ev::TransferDone(i) => {
                let ch = reads[i].target.channel;
                let die = st.die_of(i);
                st.out[i].done = q.now();
                st.die_busy[die] = false;
                st.bus_busy[ch] = false;
                st.request_arbitration(ch, &mut q);
                st.start_idle_dies(ch, &mut q);
            }
            Ev::Arbitrate(ch) => st.arbitrate_bus(ch, &mut q),
        }
    }

    let mut die_busy = vec![SimTime::ZERO; dies];
    let mut bus_busy = vec![SimTime::ZERO; geometry.channels];
    for (r, c) in reads.iter().zip(&st.out) {
        die_busy[geometry.die_index(r.target.channel, r.target.die)] += c.done - c.sense_start;
        bus_busy[r.target.channel] += c.done - c.transfer_start;
    }
    FlashRun {
        makespan: st.out.iter().map(|c| c.done).max().unwrap_or(SimTime::ZERO),
        completions: st.out,
        die_busy,
        bus_busy,
        events: q.processed(),
    }
}
