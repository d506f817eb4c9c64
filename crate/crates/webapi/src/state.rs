//! State shared between the engine thread and HTTP handlers.
//!
//! The engine is the only writer. It publishes immutable snapshots and
//! appends readings and events; handlers only read, and send operator
//! commands back through a channel.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use serde::Serialize;
use tokio::sync::{mpsc, oneshot, watch};

use senvm_core::basestation::{BaseEvent, ReadingStore};
use senvm_core::sim::{OperatorCommand, StatusSnapshot};
use senvm_core::{Result, World};

/// Events kept in the status snapshot.
pub const RECENT_EVENTS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequencedEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub event: BaseEvent,
}

/// An operator command plus the channel its outcome is reported on.
#[derive(Debug)]
pub struct Request {
    pub ac: Option<String>,
    pub value: f64,
    pub reply: oneshot::Sender<Result<()>>,
}

pub struct Shared {
    snapshot: RwLock<Option<Arc<StatusSnapshot>>>,
    readings: RwLock<ReadingStore>,
    events: RwLock<Vec<SequencedEvent>>,
    latest_seq: watch::Sender<u64>,
    requests: mpsc::UnboundedSender<Request>,
    /// Ids of the controllable units, fixed for the lifetime of a run.
    acs: Vec<String>,
    closed: AtomicBool,
}

/// Engine-side end of the shared state.
pub struct Publisher {
    shared: Arc<Shared>,
    requests: mpsc::UnboundedReceiver<Request>,
    readings_sent: usize,
    events_sent: usize,
}

impl Shared {
    pub fn new(acs: Vec<String>) -> (Arc<Shared>, Publisher) {
        let (tx, rx) = mpsc::unbounded_channel();
        let shared = Arc::new(Shared {
            snapshot: RwLock::new(None),
            readings: RwLock::new(ReadingStore::new()),
            events: RwLock::new(Vec::new()),
            latest_seq: watch::channel(0).0,
            requests: tx,
            acs,
            closed: AtomicBool::new(false),
        });
        let publisher = Publisher {
            shared: Arc::clone(&shared),
            requests: rx,
            readings_sent: 0,
            events_sent: 0,
        };
        (shared, publisher)
    }

    pub fn snapshot(&self) -> Option<Arc<StatusSnapshot>> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn with_readings<T>(&self, f: impl FnOnce(&ReadingStore) -> T) -> T {
        f(&self.readings.read().expect("readings lock"))
    }

    /// Sequence number of the newest event; 0 before the first one.
    pub fn latest_seq(&self) -> u64 {
        *self.latest_seq.borrow()
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.latest_seq.subscribe()
    }

    /// Events with a sequence number above `since`, oldest first.
    pub fn events_after(&self, since: u64) -> Vec<SequencedEvent> {
        let events = self.events.read().expect("events lock");
        let start = usize::try_from(since).unwrap_or(usize::MAX).min(events.len());
        events[start..].to_vec()
    }

    pub fn recent_events(&self, n: usize) -> Vec<SequencedEvent> {
        let events = self.events.read().expect("events lock");
        events[events.len().saturating_sub(n)..].to_vec()
    }

    /// Ends open event streams so a graceful shutdown can finish.
    pub fn close(&self) {
        self.closed.store(true, Ordering::Relaxed);
        self.latest_seq.send_modify(|_| {});
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Relaxed)
    }

    pub fn has_ac(&self, id: &str) -> bool {
        self.acs.iter().any(|a| a == id)
    }

    /// Queues an operator command. `None` when the engine has gone away.
    pub fn submit(&self, ac: Option<String>, value: f64) -> Option<oneshot::Receiver<Result<()>>> {
        let (reply, rx) = oneshot::channel();
        self.requests.send(Request { ac, value, reply }).ok()?;
        Some(rx)
    }
}

impl Publisher {
    pub fn shared(&self) -> &Arc<Shared> {
        &self.shared
    }

    /// Applies queued operator commands to `world`. The snapshot is
    /// republished before anyone is answered, so a client that saw its
    /// command succeed also sees it in the next status read.
    pub fn apply_requests(&mut self, world: &mut World) -> usize {
        let mut answered = Vec::new();
        while let Ok(r) = self.requests.try_recv() {
            let out = world.apply_operator(OperatorCommand::SetTarget {
                ac: r.ac,
                value: r.value,
            });
            answered.push((r.reply, out));
        }
        if answered.is_empty() {
            return 0;
        }
        self.publish(world);
        let n = answered.len();
        for (reply, out) in answered {
            // The requester may have given up waiting.
            let _ = reply.send(out);
        }
        n
    }

    /// Copies new readings and events out of `world` and replaces the
    /// snapshot.
    pub fn publish(&mut self, world: &World) {
        let rows = world.base().store().rows();
        if rows.len() > self.readings_sent {
            let mut store = self.shared.readings.write().expect("readings lock");
            for r in &rows[self.readings_sent..] {
                store.insert(*r);
            }
            self.readings_sent = rows.len();
        }
        let events = world.base().events();
        let mut latest = None;
        if events.len() > self.events_sent {
            let mut out = self.shared.events.write().expect("events lock");
            for e in &events[self.events_sent..] {
                let seq = out.len() as u64 + 1;
                out.push(SequencedEvent {
                    seq,
                    event: e.clone(),
                });
                latest = Some(seq);
            }
            self.events_sent = events.len();
        }
        *self.shared.snapshot.write().expect("snapshot lock") = Some(Arc::new(world.snapshot()));
        if let Some(seq) = latest {
            self.shared.latest_seq.send_replace(seq);
        }
    }
}
