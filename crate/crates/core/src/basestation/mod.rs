//! Sink-side service: the readings table, dead-node detection and the
//! per-unit setpoint controllers.

pub mod controller;
pub mod events;
pub mod liveness;
pub mod store;

pub use controller::{ControlParams, Decision, Rule, UnitController};
pub use events::BaseEvent;
pub use liveness::{Liveness, NodeState, NodeStatus};
pub use store::{read_csv, Bucket, Granularity, ReadingRecord, ReadingStore, Series, CSV_HEADER};

use std::collections::BTreeMap;

use crate::ctp::{Frame, Payload};
use crate::domain::{NodeId, NodeRole, SimTime, Temperature};
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

#[derive(Clone, Debug)]
pub struct BaseStation {
    store: ReadingStore,
    liveness: Liveness,
    units: Vec<UnitController>,
    params: ControlParams,
    control_enabled: bool,
    events: Vec<BaseEvent>,
    epoch_offset_ms: u64,
    /// Minute of each node's newest stored reading.
    open_minute: BTreeMap<NodeId, u64>,
    stub: Option<f64>,
}

impl BaseStation {
    pub fn new(s: &ScenarioConfig) -> Self {
        let mut liveness = Liveness::new(s.controller.dead_after_ms);
        for n in &s.nodes {
            if n.role != NodeRole::Sink {
                liveness.register(n.id, SimTime::ZERO);
            }
        }
        let units = s
            .plant
            .acs
            .iter()
            .map(|ac| {
                let controller = s
                    .nodes
                    .iter()
                    .find(|n| n.role == NodeRole::Controller && n.ac.as_deref() == Some(&ac.id))
                    .map_or(NodeId::SINK, |n| n.id);
                UnitController::new(
                    ac.id.clone(),
                    controller,
                    ac.sensors.clone(),
                    Temperature(s.controller.target_c),
                    Temperature(ac.setpoint_c),
                )
            })
            .collect();
        Self {
            store: ReadingStore::new(),
            liveness,
            units,
            params: ControlParams::from(&s.controller),
            control_enabled: s.controller.enabled,
            events: Vec::new(),
            epoch_offset_ms: s.run.epoch_offset_ms,
            open_minute: BTreeMap::new(),
            stub: None,
        }
    }

    pub fn store(&self) -> &ReadingStore {
        &self.store
    }

    pub fn liveness(&self) -> &Liveness {
        &self.liveness
    }

    pub fn units(&self) -> &[UnitController] {
        &self.units
    }

    pub fn events(&self) -> &[BaseEvent] {
        &self.events
    }

    pub fn control_enabled(&self) -> bool {
        self.control_enabled
    }

    fn stamp(&self, now: SimTime) -> u64 {
        now.millis() + self.epoch_offset_ms
    }

    /// Takes a frame the sink delivered. Data frames become records; any
    /// frame refreshes liveness of its origin and of the hop it came from.
    pub fn ingest(&mut self, frame: &Frame, now: SimTime) -> Option<ReadingRecord> {
        let t = self.stamp(now);
        for n in [frame.origin, frame.last_hop] {
            if self.liveness.seen(n, now) {
                self.events.push(BaseEvent::NodeRecovered { t, node: n });
            }
        }
        let Payload::Data(d) = frame.payload else {
            self.store.skip_malformed();
            return None;
        };
        let r = ReadingRecord::new(frame.origin, t, d.temperature(), d.humidity(), d.light());
        if !Temperature(r.temperature).is_valid_reading() {
            self.store.skip_malformed();
            return None;
        }
        if !self.store.insert(r) {
            return None;
        }
        let prev = self.open_minute.insert(frame.origin, r.minute);
        if let Some(m) = prev.filter(|&m| m < r.minute) {
            let range = m * SimTime::MS_PER_MINUTE..(m + 1) * SimTime::MS_PER_MINUTE;
            let minute = store::aggregate(
                self.store.range(frame.origin, range.start, range.end),
                Granularity::Minute,
            );
            if let Some(b) = minute.first() {
                self.events.push(BaseEvent::Reading {
                    t,
                    node: frame.origin,
                    minute: m,
                    mean: b.mean,
                    count: b.count,
                });
            }
        }
        Some(r)
    }

    /// Replaces every unit's measurement with `value`, bypassing the
    /// readings table. Used to drive the controller from a fixed input.
    pub fn stub_measurement(&mut self, value: Option<f64>) {
        self.stub = value;
    }

    /// One dead-node detection pass.
    pub fn liveness_pass(&mut self, now: SimTime) -> Vec<NodeId> {
        let died = self.liveness.check(now);
        let t = self.stamp(now);
        for &node in &died {
            let last_seen = self
                .liveness
                .status(node)
                .and_then(|s| s.last_seen)
                .map(|s| self.stamp(s));
            self.events.push(BaseEvent::DeadNode { t, node, last_seen });
        }
        died
    }

    /// Controlled temperature of a unit: the hottest latest minute-mean
    /// among its live sensors. The flag is set when all of them are dead.
    pub fn measured(&self, unit: usize, now: SimTime) -> (Option<f64>, bool) {
        if self.stub.is_some() {
            return (self.stub, false);
        }
        let u = &self.units[unit];
        let minute = self.stamp(now) / SimTime::MS_PER_MINUTE;
        let alive: Vec<NodeId> = u
            .sensors
            .iter()
            .copied()
            .filter(|&n| self.liveness.is_alive(n))
            .collect();
        let m = alive
            .iter()
            .filter_map(|&n| self.store.latest_minute_mean(n, minute))
            .map(|b| b.mean)
            .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
        (m, alive.is_empty() && !u.sensors.is_empty())
    }

    /// One control cycle over all units. Returns the decisions that carry a
    /// command to send.
    pub fn control_step(&mut self, now: SimTime) -> Vec<Decision> {
        if !self.control_enabled {
            return Vec::new();
        }
        let t = self.stamp(now);
        let mut out = Vec::new();
        for i in 0..self.units.len() {
            let (m, all_dead) = self.measured(i, now);
            let d = self.units[i].step(&self.params, now, m, all_dead);
            if d.alert {
                self.events.push(BaseEvent::FailSafe {
                    t,
                    ac: d.ac.clone(),
                    value: self.params.fail_safe.0,
                });
            }
            if let Some(c) = d.command {
                self.events.push(BaseEvent::Command {
                    t,
                    ac: d.ac.clone(),
                    controller: d.controller,
                    value: c.0,
                    measured: d.measured,
                });
                out.push(d);
            }
        }
        out
    }

    /// Reports that the last command for `ac` was not delivered.
    pub fn command_failed(&mut self, ac: &str, now: SimTime, no_route: bool) {
        let t = self.stamp(now);
        if let Some(u) = self.units.iter_mut().find(|u| u.ac == ac) {
            u.delivery_failed();
            if no_route {
                self.events.push(BaseEvent::NoRoute {
                    t,
                    ac: u.ac.clone(),
                    controller: u.controller,
                    value: u.last_command.0,
                });
            }
        }
    }

    /// Operator target change for one unit or, with `None`, all of them.
    pub fn set_target(&mut self, ac: Option<&str>, value: Temperature, now: SimTime) -> Result<()> {
        if let Some(id) = ac {
            if !self.units.iter().any(|u| u.ac == id) {
                return Err(Error::UnknownAc(id.to_string()));
            }
        }
        let t = self.stamp(now);
        for u in self.units.iter_mut().filter(|u| ac.is_none_or(|id| u.ac == id)) {
            u.set_target(value)?;
            self.events.push(BaseEvent::TargetChanged {
                t,
                ac: u.ac.clone(),
                value: value.0,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctp::DataPayload;

    fn station(enabled: bool) -> BaseStation {
        let mut s = ScenarioConfig::fig9();
        s.controller.enabled = enabled;
        BaseStation::new(&s)
    }

    fn data(origin: u16, last_hop: u16, seqno: u16, centi: i16) -> Frame {
        Frame {
            origin: NodeId(origin),
            seqno,
            thl: 1,
            last_hop: NodeId(last_hop),
            payload: Payload::Data(DataPayload {
                temp_centi: centi,
                humidity_centi: 5000,
                light: 10,
            }),
        }
    }

    #[test]
    fn ingest_builds_quantized_record() {
        let mut b = station(false);
        let r = b.ingest(&data(9, 1, 0, 2150), SimTime::from_millis(3_600_000)).unwrap();
        assert_eq!((r.id, r.minute, r.hour, r.day), (9, 60, 1, 0));
        assert_eq!(r.temperature, 21.5);
        assert_eq!(b.store().len(), 1);
    }

    #[test]
    fn relays_count_as_seen() {
        let mut b = station(false);
        b.ingest(&data(9, 1, 0, 2150), SimTime::from_secs(1));
        assert_eq!(
            b.liveness().status(NodeId(1)).unwrap().last_seen,
            Some(SimTime::from_secs(1))
        );
    }

    #[test]
    fn dead_and_recovered_events() {
        let mut b = station(false);
        b.ingest(&data(9, 9, 0, 2000), SimTime::from_secs(1000));
        b.liveness_pass(SimTime::from_millis(1_300_000));
        assert!(b.events().is_empty() || b.events().iter().all(|e| !matches!(e, BaseEvent::DeadNode { node: NodeId(9), .. })));
        b.liveness_pass(SimTime::from_millis(1_300_001));
        assert!(b.events().iter().any(|e| matches!(e, BaseEvent::DeadNode { node: NodeId(9), .. })));
        b.ingest(&data(9, 9, 1, 2000), SimTime::from_secs(1400));
        let recovered = b
            .events()
            .iter()
            .filter(|e| matches!(e, BaseEvent::NodeRecovered { node: NodeId(9), .. }))
            .count();
        assert_eq!(recovered, 1);
    }

    #[test]
    fn disabled_controller_issues_nothing() {
        let mut b = station(false);
        b.ingest(&data(9, 9, 0, 3000), SimTime::from_secs(10));
        assert!(b.control_step(SimTime::from_secs(60)).is_empty());
    }

    #[test]
    fn hottest_live_sensor_is_controlled() {
        let mut b = station(true);
        let unit = 0;
        let sensors = b.units()[unit].sensors.clone();
        assert!(sensors.len() >= 2);
        b.ingest(&data(sensors[0].0, 1, 0, 2400), SimTime::from_secs(10));
        b.ingest(&data(sensors[1].0, 1, 0, 2700), SimTime::from_secs(11));
        b.ingest(&data(sensors[1].0, 1, 1, 2900), SimTime::from_secs(12));
        let (m, dead) = b.measured(unit, SimTime::from_secs(60));
        assert_eq!((m, dead), (Some(28.0), false));
        let (m, _) = b.measured(unit, SimTime::from_secs(59));
        assert_eq!(m, None, "minute 0 still open");
    }

    #[test]
    fn set_target_validates() {
        let mut b = station(true);
        assert!(b.set_target(None, Temperature(19.0), SimTime::ZERO).is_err());
        assert!(matches!(
            b.set_target(Some("nope"), Temperature(25.0), SimTime::ZERO),
            Err(Error::UnknownAc(_))
        ));
        b.set_target(None, Temperature(26.0), SimTime::ZERO).unwrap();
        assert!(b.units().iter().all(|u| u.target == Temperature(26.0)));
    }
}
