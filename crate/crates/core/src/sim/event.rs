//! Time-ordered event queue with a deterministic tie-break.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("event scheduled at {at}s, before the current time {now}s")]
pub struct OrderingError {
    pub at: SimTime,
    pub now: SimTime,
}

#[derive(Debug)]
struct Scheduled<E> {
    time: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so the max-heap pops the earliest (time, seq).
impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Events are dispatched in `(time, seq)` order, `seq` being the insertion
/// counter, so equal-time events keep their scheduling order.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Scheduled<E>>,
    next_seq: u64,
    now: SimTime,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: SimTime::ZERO,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, at: SimTime, event: E) -> Result<u64, OrderingError> {
        if at < self.now {
            return Err(OrderingError { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { time: at, seq, event });
        Ok(seq)
    }

    /// Pops the next event if it is due strictly before `t_end`, advancing
    /// the clock to its time.
    pub fn pop_before(&mut self, t_end: SimTime) -> Option<(SimTime, E)> {
        if self.heap.peek()?.time >= t_end {
            return None;
        }
        let s = self.heap.pop()?;
        self.now = s.time;
        Some((s.time, s.event))
    }

    /// Events still pending, in no particular order.
    pub fn pending(&self) -> impl Iterator<Item = (SimTime, &E)> {
        self.heap.iter().map(|s| (s.time, &s.event))
    }

    /// Dispatches every event before `t_end`, then sets the clock to `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<(), OrderingError>
    where
        F: FnMut(&mut Self, SimTime, E) -> Result<(), OrderingError>,
    {
        while let Some((t, e)) = self.pop_before(t_end) {
            handler(self, t, e)?;
        }
        if t_end > self.now {
            self.now = t_end;
        }
        Ok(())
    }
}
