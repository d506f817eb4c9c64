use std::collections::BTreeMap;

use serde::Serialize;

use crate::domain::{NodeId, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Alive,
    Dead,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NodeStatus {
    pub node: NodeId,
    pub last_seen: Option<SimTime>,
    pub registered: SimTime,
    pub state: NodeState,
}

/// Heartbeat-style failure detector: a node is dead once nothing from it
/// has reached the sink for more than `dead_after_ms`.
#[derive(Clone, Debug)]
pub struct Liveness {
    dead_after_ms: u64,
    nodes: BTreeMap<NodeId, NodeStatus>,
}

impl Liveness {
    pub fn new(dead_after_ms: u64) -> Self {
        Self {
            dead_after_ms,
            nodes: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, node: NodeId, now: SimTime) {
        self.nodes.entry(node).or_insert(NodeStatus {
            node,
            last_seen: None,
            registered: now,
            state: NodeState::Alive,
        });
    }

    /// Notes traffic from `node`. Returns `true` if it was dead until now.
    pub fn seen(&mut self, node: NodeId, now: SimTime) -> bool {
        let Some(s) = self.nodes.get_mut(&node) else {
            return false;
        };
        s.last_seen = Some(s.last_seen.map_or(now, |t| t.max(now)));
        let recovered = s.state == NodeState::Dead;
        s.state = NodeState::Alive;
        recovered
    }

    /// One detection pass. Returns nodes that went from alive to dead.
    pub fn check(&mut self, now: SimTime) -> Vec<NodeId> {
        let mut died = Vec::new();
        for s in self.nodes.values_mut() {
            let since = s.last_seen.unwrap_or(s.registered);
            if s.state == NodeState::Alive && now.saturating_sub(since).as_millis() > u128::from(self.dead_after_ms) {
                s.state = NodeState::Dead;
                died.push(s.node);
            }
        }
        died
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.nodes.get(&node).is_some_and(|s| s.state == NodeState::Alive)
    }

    pub fn status(&self, node: NodeId) -> Option<&NodeStatus> {
        self.nodes.get(&node)
    }

    pub fn statuses(&self) -> impl Iterator<Item = &NodeStatus> {
        self.nodes.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: u64 = 1_000_000;

    fn tracked() -> Liveness {
        let mut l = Liveness::new(300_000);
        l.register(NodeId(9), SimTime::ZERO);
        l.seen(NodeId(9), SimTime::from_millis(T));
        l
    }

    #[test]
    fn boundary_is_exclusive() {
        let mut l = tracked();
        assert!(l.check(SimTime::from_millis(T + 299_999)).is_empty());
        assert!(l.check(SimTime::from_millis(T + 300_000)).is_empty());
        assert_eq!(l.check(SimTime::from_millis(T + 300_001)), [NodeId(9)]);
        assert!(!l.is_alive(NodeId(9)));
    }

    #[test]
    fn one_event_per_transition() {
        let mut l = tracked();
        let mut events = 0;
        for s in 0..1000 {
            events += l.check(SimTime::from_millis(T + s * 1000)).len();
        }
        assert_eq!(events, 1);
        assert!(l.seen(NodeId(9), SimTime::from_millis(T + 1_000_000)));
        assert!(l.check(SimTime::from_millis(T + 1_200_000)).is_empty());
        assert_eq!(l.check(SimTime::from_millis(T + 1_300_001)).len(), 1);
    }

    #[test]
    fn never_heard_dies_after_registration_window() {
        let mut l = Liveness::new(300_000);
        l.register(NodeId(4), SimTime::from_secs(10));
        assert!(l.check(SimTime::from_millis(310_000)).is_empty());
        assert_eq!(l.check(SimTime::from_millis(310_001)), [NodeId(4)]);
    }

    #[test]
    fn unregistered_traffic_is_ignored() {
        let mut l = Liveness::new(300_000);
        assert!(!l.seen(NodeId(0), SimTime::ZERO));
        assert!(l.status(NodeId(0)).is_none());
    }
}
