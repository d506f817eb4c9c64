//! Shared vocabulary: node identifiers, simulated time, temperatures and
//! sensor readings, plus scenario-level validation.

use std::fmt;
use std::ops::{Add, Sub};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::scenario::ScenarioConfig;

/// Identifier of a mote. The sink is always [`NodeId::SINK`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u16);

impl NodeId {
    pub const SINK: NodeId = NodeId(0);

    pub fn is_sink(self) -> bool {
        self == Self::SINK
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}", self.0)
    }
}

/// Milliseconds since scenario start.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MS_PER_MINUTE: u64 = 60_000;
    pub const MS_PER_HOUR: u64 = 3_600_000;
    pub const MS_PER_DAY: u64 = 86_400_000;

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1000)
    }

    pub const fn from_mins(m: u64) -> Self {
        SimTime(m * Self::MS_PER_MINUTE)
    }

    pub const fn from_hours(h: u64) -> Self {
        SimTime(h * Self::MS_PER_HOUR)
    }

    pub const fn from_days(d: u64) -> Self {
        SimTime(d * Self::MS_PER_DAY)
    }

    pub const fn millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn as_days_f64(self) -> f64 {
        self.0 as f64 / Self::MS_PER_DAY as f64
    }

    /// Milliseconds elapsed since local midnight of the scenario clock.
    pub const fn time_of_day_ms(self) -> u64 {
        self.0 % Self::MS_PER_DAY
    }

    pub fn saturating_sub(self, other: SimTime) -> Duration {
        Duration::from_millis(self.0.saturating_sub(other.0))
    }
}

impl Add<Duration> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: Duration) -> SimTime {
        SimTime(self.0 + rhs.as_millis() as u64)
    }
}

impl Sub for SimTime {
    type Output = Duration;

    /// Panics if `rhs` is later than `self`.
    fn sub(self, rhs: SimTime) -> Duration {
        Duration::from_millis(
            self.0
                .checked_sub(rhs.0)
                .expect("simulated time went backwards"),
        )
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let day = self.0 / Self::MS_PER_DAY;
        let rem = self.0 % Self::MS_PER_DAY;
        write!(
            f,
            "d{}+{:02}:{:02}:{:02}.{:03}",
            day,
            rem / Self::MS_PER_HOUR,
            (rem / Self::MS_PER_MINUTE) % 60,
            (rem / 1000) % 60,
            rem % 1000
        )
    }
}

/// Degrees Celsius.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Temperature(pub f64);

impl Temperature {
    /// Range a plant reading may take.
    pub const READING_RANGE: (f64, f64) = (0.0, 60.0);
    /// Range an air-conditioner accepts as a commanded setpoint.
    pub const COMMAND_RANGE: (f64, f64) = (18.0, 30.0);

    pub fn celsius(self) -> f64 {
        self.0
    }

    pub fn is_valid_reading(self) -> bool {
        self.0.is_finite() && (Self::READING_RANGE.0..=Self::READING_RANGE.1).contains(&self.0)
    }

    pub fn is_valid_command(self) -> bool {
        self.0.is_finite() && (Self::COMMAND_RANGE.0..=Self::COMMAND_RANGE.1).contains(&self.0)
    }

    pub fn clamp_command(self) -> Temperature {
        Temperature(self.0.clamp(Self::COMMAND_RANGE.0, Self::COMMAND_RANGE.1))
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}°C", self.0)
    }
}

/// One timestamped measurement taken by a mote.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub node: NodeId,
    pub time: SimTime,
    pub temperature: Temperature,
    /// Relative humidity, percent.
    pub humidity: f64,
    /// Light intensity, arbitrary non-negative units.
    pub light: f64,
}

impl SensorReading {
    pub fn is_valid(&self) -> bool {
        self.temperature.is_valid_reading()
            && self.humidity.is_finite()
            && (0.0..=100.0).contains(&self.humidity)
            && self.light.is_finite()
            && self.light >= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Sink,
    Sensor,
    Controller,
    Relay,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSource {
    Battery,
    #[default]
    Line,
}

/// A well-formedness problem found in a scenario.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Checks a parsed scenario for structural problems. An empty result means
/// the scenario can be run.
pub fn validate_scenario(scenario: &ScenarioConfig) -> Vec<Violation> {
    use std::collections::{BTreeMap, BTreeSet};

    let mut out = Vec::new();
    let mut push = |s: String| out.push(Violation(s));

    let mut ids = BTreeSet::new();
    for n in &scenario.nodes {
        if !ids.insert(n.id) {
            push(format!("duplicate node id {}", n.id.0));
        }
    }

    let sinks: Vec<_> = scenario
        .nodes
        .iter()
        .filter(|n| n.role == NodeRole::Sink)
        .collect();
    match sinks.len() {
        0 => push("no sink".into()),
        1 if !sinks[0].id.is_sink() => push(format!(
            "sink must have id 0, found {}",
            sinks[0].id.0
        )),
        1 => {}
        _ => push("multiple sinks".into()),
    }
    for n in &scenario.nodes {
        if n.id.is_sink() && n.role != NodeRole::Sink {
            push("node id 0 is reserved for the sink".into());
        }
    }

    for l in &scenario.radio.links {
        for end in [l.from, l.to] {
            if !ids.contains(&end) {
                push(format!("link references unknown node {}", end.0));
            }
        }
        if !(0.0..=1.0).contains(&l.prr) {
            push(format!("link {}->{} prr {} outside [0,1]", l.from.0, l.to.0, l.prr));
        }
        if l.from == l.to {
            push(format!("self link on node {}", l.from.0));
        }
    }
    if !(11..=26).contains(&scenario.radio.sensor_channel) {
        push(format!(
            "sensor channel {} outside 11..=26",
            scenario.radio.sensor_channel
        ));
    }
    for w in &scenario.radio.interferers {
        if ![1, 6, 11].contains(&w.channel) {
            push(format!("wifi channel {} not one of 1, 6, 11", w.channel));
        }
        if !(0.0..=1.0).contains(&w.activity) {
            push(format!("wifi activity {} outside [0,1]", w.activity));
        }
    }

    let plant = &scenario.plant;
    let zone_ids: BTreeSet<_> = plant.zones.iter().map(|z| z.id.as_str()).collect();
    let placed: BTreeMap<NodeId, _> = plant.sensors.iter().map(|s| (s.node, s)).collect();

    for s in &plant.sensors {
        if !ids.contains(&s.node) {
            push(format!("sensor placement references unknown node {}", s.node.0));
        }
        if !zone_ids.contains(s.zone.as_str()) {
            push(format!("sensor {} placed in unknown zone {}", s.node.0, s.zone));
        }
    }
    for n in &scenario.nodes {
        if matches!(n.role, NodeRole::Sensor | NodeRole::Controller) && !placed.contains_key(&n.id)
        {
            push(format!("node {} samples but has no placement in the plant", n.id.0));
        }
    }

    for rack in &plant.racks {
        if !plant
            .sensors
            .iter()
            .any(|s| s.rack.as_deref() == Some(rack.id.as_str()))
        {
            push(format!("rack without sensor: {}", rack.id));
        }
    }

    let mut controller_for = BTreeMap::new();
    for n in &scenario.nodes {
        match (n.role, &n.ac) {
            (NodeRole::Controller, Some(ac)) => {
                if controller_for.insert(ac.clone(), n.id).is_some() {
                    push(format!("ac {} bound to more than one controller", ac));
                }
            }
            (NodeRole::Controller, None) => {
                push(format!("controller {} not bound to an ac", n.id.0))
            }
            (_, Some(_)) => push(format!("node {} is bound to an ac but is not a controller", n.id.0)),
            _ => {}
        }
    }

    for ac in &plant.acs {
        for z in std::iter::once(&ac.zone).chain(ac.supply_zone.as_ref()) {
            if !zone_ids.contains(z.as_str()) {
                push(format!("ac {} references unknown zone {}", ac.id, z));
            }
        }
        if ac.sensors.is_empty() {
            push(format!("ac without sensor: {}", ac.id));
        }
        for s in &ac.sensors {
            if !placed.contains_key(s) {
                push(format!("ac {} assigned unplaced sensor {}", ac.id, s.0));
            }
        }
        if !controller_for.contains_key(&ac.id) && scenario.controller.enabled {
            push(format!("ac {} has no controller node", ac.id));
        }
    }
    for ac in controller_for.keys() {
        if !plant.acs.iter().any(|a| &a.id == ac) {
            push(format!("controller bound to unknown ac {}", ac));
        }
    }

    out
}
