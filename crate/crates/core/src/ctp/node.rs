use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use super::estimator::EstimatorParams;
use super::routing::{ParentChange, ParentTable, SwitchRule};
use super::wire::{centi_to_etx, etx_to_centi, CommandPayload, DataPayload, Frame, Payload};
use crate::domain::NodeId;
use crate::error::{Error, Result};
use crate::scenario::CtpConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CtpParams {
    pub estimator: EstimatorParams,
    pub switch: SwitchRule,
    pub max_attempts: u32,
    pub dedup_cache: usize,
    pub queue_depth: usize,
    pub thl_limit: u8,
}

impl Default for CtpParams {
    fn default() -> Self {
        Self::from(&CtpConfig::default())
    }
}

impl From<&CtpConfig> for CtpParams {
    fn from(c: &CtpConfig) -> Self {
        Self {
            estimator: EstimatorParams {
                alpha: c.ewma_alpha,
                window: c.window,
            },
            switch: SwitchRule {
                broken_link_prr: c.broken_link_prr,
                hysteresis_etx: c.hysteresis_etx,
            },
            max_attempts: c.max_attempts,
            dedup_cache: c.dedup_cache,
            queue_depth: c.queue_depth,
            thl_limit: c.thl_limit,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Duplicate,
    ThlExceeded,
    QueueFull,
    NoRoute,
    RetriesExhausted,
}

impl DropReason {
    pub fn name(self) -> &'static str {
        match self {
            DropReason::Duplicate => "duplicate",
            DropReason::ThlExceeded => "thl_exceeded",
            DropReason::QueueFull => "queue_full",
            DropReason::NoRoute => "no_route",
            DropReason::RetriesExhausted => "retries_exhausted",
        }
    }
}

/// What a node did with a frame it received.
#[derive(Clone, Debug, PartialEq)]
pub enum Received {
    /// Sink only: hand the frame to the base station.
    Deliver(Frame),
    /// Queued for the next hop. Carries the frame evicted to make room.
    Queued { evicted: Option<Frame> },
    /// A command addressed to this node.
    Apply(CommandPayload),
    Drop(DropReason),
}

/// Result of a finished link-layer transmission.
#[derive(Clone, Debug, PartialEq)]
pub struct TxReport {
    pub frame: Frame,
    pub delivered: bool,
    pub parent_change: Option<ParentChange>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Direction {
    Up,
    Down(NodeId),
}

/// Collection-tree state of one mote.
#[derive(Clone, Debug)]
pub struct CtpNode {
    id: NodeId,
    is_sink: bool,
    params: CtpParams,
    table: ParentTable,
    data_seq: u16,
    beacon_seq: u16,
    upstream: VecDeque<Frame>,
    downstream: VecDeque<(Frame, NodeId)>,
    in_flight: Option<(Frame, Direction)>,
    seen: VecDeque<(u8, NodeId, u16)>,
    /// Per origin, the neighbor its frames last arrived from.
    reverse: BTreeMap<NodeId, NodeId>,
}

impl CtpNode {
    pub fn new(id: NodeId, is_sink: bool, params: CtpParams) -> Self {
        Self {
            id,
            is_sink,
            params,
            table: ParentTable::default(),
            data_seq: 0,
            beacon_seq: 0,
            upstream: VecDeque::new(),
            downstream: VecDeque::new(),
            in_flight: None,
            seen: VecDeque::new(),
            reverse: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn is_sink(&self) -> bool {
        self.is_sink
    }

    pub fn parent(&self) -> Option<NodeId> {
        if self.is_sink {
            None
        } else {
            self.table.current()
        }
    }

    pub fn table(&self) -> &ParentTable {
        &self.table
    }

    pub fn path_etx(&self) -> f64 {
        if self.is_sink {
            0.0
        } else {
            self.table.path_etx()
        }
    }

    pub fn queue_len(&self) -> usize {
        self.upstream.len()
    }

    pub fn reverse_hop(&self, origin: NodeId) -> Option<NodeId> {
        self.reverse.get(&origin).copied()
    }

    pub fn is_busy(&self) -> bool {
        self.in_flight.is_some()
    }

    pub fn make_beacon(&mut self) -> Frame {
        let seqno = self.beacon_seq;
        self.beacon_seq = self.beacon_seq.wrapping_add(1);
        Frame {
            origin: self.id,
            seqno,
            thl: 0,
            last_hop: self.id,
            payload: Payload::Beacon {
                path_etx_centi: etx_to_centi(self.path_etx()),
            },
        }
    }

    pub fn on_beacon(&mut self, from: NodeId, frame: &Frame) -> Option<ParentChange> {
        let Payload::Beacon { path_etx_centi } = frame.payload else {
            return None;
        };
        if from == self.id || self.is_sink {
            return None;
        }
        self.table.record_beacon(
            from,
            frame.seqno,
            centi_to_etx(path_etx_centi),
            &self.params.estimator,
        );
        self.table.maybe_switch(&self.params.switch)
    }

    /// Wraps a local reading in a fresh frame and queues it upstream.
    /// Returns the frame and whatever was evicted to make room.
    pub fn originate(&mut self, data: DataPayload) -> (Frame, Option<Frame>) {
        let frame = Frame {
            origin: self.id,
            seqno: self.data_seq,
            thl: 0,
            last_hop: self.id,
            payload: Payload::Data(data),
        };
        self.data_seq = self.data_seq.wrapping_add(1);
        self.remember(&frame);
        let evicted = self.push_upstream(frame);
        (frame, evicted)
    }

    /// Sink only: starts a command down the reverse path toward `cmd.dest`.
    pub fn route_command(&mut self, cmd: CommandPayload) -> Result<Frame> {
        let next = self.reverse_hop(cmd.dest).ok_or(Error::NoRoute(cmd.dest))?;
        let frame = Frame {
            origin: self.id,
            seqno: self.data_seq,
            thl: 0,
            last_hop: self.id,
            payload: Payload::Command(cmd),
        };
        self.data_seq = self.data_seq.wrapping_add(1);
        self.remember(&frame);
        self.push_downstream(frame, next);
        Ok(frame)
    }

    /// Handles a data or command frame that arrived from `from`.
    pub fn on_receive(&mut self, from: NodeId, mut frame: Frame) -> Received {
        frame.thl = frame.thl.saturating_add(1);
        frame.last_hop = from;
        if self.is_duplicate(&frame) {
            return Received::Drop(DropReason::Duplicate);
        }
        if frame.thl > self.params.thl_limit {
            return Received::Drop(DropReason::ThlExceeded);
        }
        self.remember(&frame);
        match frame.payload {
            Payload::Beacon { .. } => Received::Drop(DropReason::Duplicate),
            Payload::Data(_) => {
                self.reverse.insert(frame.origin, from);
                if self.is_sink {
                    Received::Deliver(frame)
                } else {
                    Received::Queued {
                        evicted: self.push_upstream(frame),
                    }
                }
            }
            Payload::Command(cmd) if cmd.dest == self.id => Received::Apply(cmd),
            Payload::Command(cmd) => match self.reverse_hop(cmd.dest) {
                Some(next) => Received::Queued {
                    evicted: self.push_downstream(frame, next),
                },
                None => Received::Drop(DropReason::NoRoute),
            },
        }
    }

    /// Takes the next frame to send and its next hop, if the radio is idle
    /// and something is routable. Commands go before data.
    pub fn next_transmission(&mut self) -> Option<(Frame, NodeId)> {
        if self.in_flight.is_some() {
            return None;
        }
        if let Some((mut f, next)) = self.downstream.pop_front() {
            f.last_hop = self.id;
            self.in_flight = Some((f, Direction::Down(next)));
            return Some((f, next));
        }
        let parent = self.parent()?;
        let mut f = self.upstream.pop_front()?;
        f.last_hop = self.id;
        self.in_flight = Some((f, Direction::Up));
        Some((f, parent))
    }

    /// Completes the in-flight transmission to `to` after `attempts` tries.
    /// All attempts but the last failed; the last one failed too unless
    /// `delivered`.
    pub fn on_tx_done(&mut self, to: NodeId, delivered: bool, attempts: u32) -> Option<TxReport> {
        let (frame, _) = self.in_flight.take()?;
        let est = self.table.estimate_mut(to);
        for i in 0..attempts {
            est.on_data_attempt(delivered && i + 1 == attempts, &self.params.estimator);
        }
        let parent_change = if self.is_sink {
            None
        } else {
            self.table.maybe_switch(&self.params.switch)
        };
        Some(TxReport {
            frame,
            delivered,
            parent_change,
        })
    }

    pub fn max_attempts(&self) -> u32 {
        self.params.max_attempts
    }

    fn push_upstream(&mut self, frame: Frame) -> Option<Frame> {
        let evicted = if self.upstream.len() >= self.params.queue_depth {
            self.upstream.pop_front()
        } else {
            None
        };
        self.upstream.push_back(frame);
        evicted
    }

    fn push_downstream(&mut self, frame: Frame, next: NodeId) -> Option<Frame> {
        let evicted = if self.downstream.len() >= self.params.queue_depth {
            self.downstream.pop_front().map(|(f, _)| f)
        } else {
            None
        };
        self.downstream.push_back((frame, next));
        evicted
    }

    fn key(frame: &Frame) -> (u8, NodeId, u16) {
        (frame.frame_type() as u8, frame.origin, frame.seqno)
    }

    fn is_duplicate(&self, frame: &Frame) -> bool {
        let k = Self::key(frame);
        self.seen.contains(&k)
    }

    fn remember(&mut self, frame: &Frame) {
        if self.params.dedup_cache == 0 {
            return;
        }
        if self.seen.len() >= self.params.dedup_cache {
            self.seen.pop_front();
        }
        self.seen.push_back(Self::key(frame));
    }
}
