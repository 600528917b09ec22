use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::time::SimTime;

/// A scheduled event. Events pop in `(at, seq)` order; `seq` is the
/// enqueue sequence number, so simultaneous events run first-in first-out.
#[derive(Debug, Clone)]
pub struct Event<K> {
    pub at: SimTime,
    pub seq: u64,
    pub kind: K,
}

impl<K> PartialEq for Event<K> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<K> Eq for Event<K> {}

impl<K> PartialOrd for Event<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Event<K> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Deterministic event queue with a monotone clock.
#[derive(Debug)]
pub struct EventQueue<K> {
    heap: BinaryHeap<Event<K>>,
    now: SimTime,
    next_seq: u64,
    popped: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            popped: 0,
        }
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedules `kind` at `at`.
    ///
    /// Panics if `at` lies in the past; causality violations are bugs in
    /// the caller, not recoverable conditions.
    pub fn schedule(&mut self, at: SimTime, kind: K) -> u64 {
        assert!(at >= self.now, "event scheduled at {at} before now {}", self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { at, seq, kind });
        seq
    }

    pub fn schedule_in(&mut self, delay: SimTime, kind: K) -> u64 {
        self.schedule(self.now + delay, kind)
    }

    pub fn pop(&mut self) -> Option<Event<K>> {
        let ev = self.heap.pop()?;
        debug_assert!(ev.at >= self.now);
        self.now = ev.at;
        self.popped += 1;
        Some(ev)
    }

    /// Time of the next event, if any.
    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.at)
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    /// Events executed so far.
    pub fn processed(&self) -> u64 {
        self.popped
    }
}
