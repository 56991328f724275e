//! Logical clock and event queue for the discrete-event simulation.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use situ_core::EpochTime;

/// Single-threaded event queue ordered by (time, insertion sequence). Ties
/// resolve in insertion order, so runs are deterministic.
pub struct SimClock<E> {
    now: EpochTime,
    seq: u64,
    queue: BinaryHeap<Reverse<Scheduled<E>>>,
}

struct Scheduled<E> {
    at: EpochTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl<E> SimClock<E> {
    pub fn new(start: EpochTime) -> Self {
        SimClock {
            now: start,
            seq: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> EpochTime {
        self.now
    }

    /// Schedule an event. Events in the past are clamped to `now`; the clock
    /// never runs backwards.
    pub fn schedule(&mut self, at: EpochTime, event: E) {
        let at = at.max(self.now);
        self.queue.push(Reverse(Scheduled {
            at,
            seq: self.seq,
            event,
        }));
        self.seq += 1;
    }

    pub fn schedule_in(&mut self, delay_ms: u64, event: E) {
        self.schedule(self.now.add_millis(delay_ms), event);
    }

    /// Pop the next event, advancing the clock to its time.
    pub fn pop(&mut self) -> Option<(EpochTime, E)> {
        let Reverse(next) = self.queue.pop()?;
        self.now = next.at;
        Some((next.at, next.event))
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}
