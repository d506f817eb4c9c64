use serde::Serialize;

use crate::domain::{NodeId, SimTime};

/// Base-station event, one JSON object per line in the event log.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseEvent {
    /// Summary of one node's readings over a finished minute.
    Reading {
        t: u64,
        node: NodeId,
        minute: u64,
        mean: f64,
        count: u64,
    },
    DeadNode {
        t: u64,
        node: NodeId,
        last_seen: Option<u64>,
    },
    NodeRecovered {
        t: u64,
        node: NodeId,
    },
    Command {
        t: u64,
        ac: String,
        controller: NodeId,
        value: f64,
        measured: Option<f64>,
    },
    NoRoute {
        t: u64,
        ac: String,
        controller: NodeId,
        value: f64,
    },
    FailSafe {
        t: u64,
        ac: String,
        value: f64,
    },
    TargetChanged {
        t: u64,
        ac: String,
        value: f64,
    },
}

impl BaseEvent {
    pub fn time(&self) -> SimTime {
        let t = match self {
            BaseEvent::Reading { t, .. }
            | BaseEvent::DeadNode { t, .. }
            | BaseEvent::NodeRecovered { t, .. }
            | BaseEvent::Command { t, .. }
            | BaseEvent::NoRoute { t, .. }
            | BaseEvent::FailSafe { t, .. }
            | BaseEvent::TargetChanged { t, .. } => *t,
        };
        SimTime::from_millis(t)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BaseEvent::Reading { .. } => "reading",
            BaseEvent::DeadNode { .. } => "dead_node",
            BaseEvent::NodeRecovered { .. } => "node_recovered",
            BaseEvent::Command { .. } => "command",
            BaseEvent::NoRoute { .. } => "no_route",
            BaseEvent::FailSafe { .. } => "fail_safe",
            BaseEvent::TargetChanged { .. } => "target_changed",
        }
    }

    /// Events an operator should see flagged.
    pub fn is_alert(&self) -> bool {
        matches!(
            self,
            BaseEvent::DeadNode { .. } | BaseEvent::FailSafe { .. } | BaseEvent::NoRoute { .. }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_with_kind_tag() {
        let e = BaseEvent::DeadNode {
            t: 900_000,
            node: NodeId(10),
            last_seen: Some(599_508),
        };
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"kind":"dead_node","t":900000,"node":10,"last_seen":599508}"#
        );
        assert_eq!(e.kind(), "dead_node");
        assert!(e.is_alert());
    }
}
