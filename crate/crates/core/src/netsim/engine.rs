use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::domain::{NodeId, SimTime};
use crate::error::{Error, Result};

/// Who an event is addressed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    Node(NodeId),
    /// Plant, base station, scripted actions.
    System,
}

impl Target {
    pub fn node(self) -> Option<NodeId> {
        match self {
            Target::Node(n) => Some(n),
            Target::System => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event<P> {
    pub time: SimTime,
    /// Insertion counter; breaks ties between simultaneous events FIFO.
    pub seq: u64,
    pub target: Target,
    pub payload: P,
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.time, self.0.seq) == (other.0.time, other.0.seq)
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

/// Single-threaded discrete-event queue.
pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<P>>,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Enqueues `payload` for `time`; returns its sequence number.
    pub fn schedule(&mut self, time: SimTime, target: Target, payload: P) -> Result<u64> {
        if time < self.now {
            return Err(Error::ScheduledInPast { at: time, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event {
            time,
            seq,
            target,
            payload,
        }));
        Ok(seq)
    }

    /// Pops the next event due at or before `until`, advancing the clock to
    /// its timestamp. Returns `None` (and parks the clock at `until`) once
    /// nothing else is due.
    pub fn pop_until(&mut self, until: SimTime) -> Option<Event<P>> {
        match self.queue.peek() {
            Some(q) if q.0.time <= until => {
                let ev = self.queue.pop().expect("peeked").0;
                self.now = ev.time;
                Some(ev)
            }
            _ => {
                if until > self.now {
                    self.now = until;
                }
                None
            }
        }
    }

    /// Executes every event with time ≤ `until` through `handler`. The
    /// handler may schedule further events, including at the current time.
    pub fn run_until<F>(&mut self, until: SimTime, mut handler: F) -> Result<()>
    where
        F: FnMut(&mut Self, Event<P>) -> Result<()>,
    {
        while let Some(ev) = self.pop_until(until) {
            handler(self, ev)?;
        }
        Ok(())
    }
}
