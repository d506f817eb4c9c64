//! The simulated deployment: motes, radio, room and base station driven by
//! one event queue.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::Rng;
use serde::Serialize;

use crate::basestation::{BaseStation, NodeState};
use crate::ctp::{
    CommandPayload, CtpNode, CtpParams, DataPayload, DropReason, Frame, FrameType, ParentChange,
    Received,
};
use crate::domain::{validate_scenario, NodeId, NodeRole, PowerSource, SimTime, Temperature};
use crate::error::{Error, Result};
use crate::netsim::radio::transmit;
use crate::netsim::{
    charge_idle_listen, EnergyAccount, EnergyRates, Engine, Purpose, Radio, Streams, Target,
    TraceDetail, TraceRecord, TraceWriter,
};
use crate::plant::{Plant, ThermalSnapshot};
use crate::report::{self, NodeDayNight};
use crate::scenario::{ScenarioConfig, ScriptAction};

const TICK_MS: u64 = 1000;

#[derive(Clone, Debug, PartialEq)]
pub enum SimEvent {
    /// Plant step, idle-listening energy.
    Tick,
    Liveness,
    Control,
    Sample,
    Beacon,
    TxDone {
        to: NodeId,
        frame: Frame,
        ok: bool,
        attempts: u32,
    },
    Script(usize),
}

/// Operator input arriving from outside the engine.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorCommand {
    SetTarget { ac: Option<String>, value: f64 },
}

struct Mote {
    role: NodeRole,
    ac: Option<String>,
    ctp: CtpNode,
    energy: EnergyAccount,
    silenced: bool,
    sample_period_ms: Option<u64>,
}

impl Mote {
    fn on(&self) -> bool {
        !self.silenced && !self.energy.is_depleted()
    }
}

/// Delivery bookkeeping for frames a node originated.
#[derive(Clone, Debug, Default)]
struct OriginLog {
    times: Vec<u64>,
    delivered: Vec<bool>,
}

impl OriginLog {
    /// Index of the most recent origination with this 16-bit sequence number.
    fn index_of(&self, seqno: u16) -> Option<usize> {
        let n = self.times.len();
        if n == 0 {
            return None;
        }
        let last = n - 1;
        let back = (last as u64).wrapping_sub(u64::from(seqno)) % 65_536;
        last.checked_sub(back as usize)
    }

    fn ratio(&self, from: u64, to: u64) -> Option<f64> {
        let lo = self.times.partition_point(|&t| t < from);
        let hi = self.times.partition_point(|&t| t < to);
        if hi <= lo {
            return None;
        }
        let ok = self.delivered[lo..hi].iter().filter(|&&d| d).count();
        Some(ok as f64 / (hi - lo) as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParentSwitch {
    pub t: u64,
    pub node: NodeId,
    pub from: Option<NodeId>,
    pub to: Option<NodeId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CommandStats {
    pub issued: u64,
    pub applied: u64,
    pub failed: u64,
    pub no_route: u64,
}

/// Per-zone truth, aggregated per minute.
#[derive(Clone, Debug, Default)]
struct ZoneLog {
    minute_means: Vec<Vec<f64>>,
    acc: Vec<(f64, u32)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub role: NodeRole,
    pub originated: u64,
    pub delivered: u64,
    pub delivery_ratio: Option<f64>,
    pub parent: Option<NodeId>,
    pub path_etx: Option<f64>,
    pub energy_spent_mj: f64,
    pub depleted_at_ms: Option<u64>,
    pub state: Option<NodeState>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZoneSummary {
    pub id: String,
    pub final_c: f64,
    pub mean_c: Option<f64>,
    pub min_minute_mean_c: Option<f64>,
    pub max_minute_mean_c: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: u64,
    pub events: u64,
    pub delivery_ratio: Option<f64>,
    pub nodes: Vec<NodeSummary>,
    pub day_night: Vec<NodeDayNight>,
    pub day_start_h: u32,
    pub day_end_h: u32,
    pub commands: CommandStats,
    pub parent_switches: usize,
    pub dead_nodes: Vec<NodeId>,
    pub zones: Vec<ZoneSummary>,
    pub cooling_energy_j: f64,
    pub readings: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeStatusView {
    pub id: NodeId,
    pub role: NodeRole,
    pub label: String,
    pub state: NodeState,
    pub last_seen_ms: Option<u64>,
    pub parent: Option<NodeId>,
    pub path_etx: Option<f64>,
    pub latest: Option<LatestReading>,
    pub energy_spent_mj: f64,
    pub depleted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LatestReading {
    pub timestamp: u64,
    pub temperature: f64,
    pub humidity: f64,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AcStatusView {
    pub id: String,
    pub controller: NodeId,
    pub target: f64,
    pub last_command: f64,
    pub setpoint: f64,
    pub cooling_w: f64,
    pub fail_safe: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TreeEdge {
    pub child: NodeId,
    pub parent: NodeId,
}

/// Consistent view of the running world at one instant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatusSnapshot {
    pub sim_time_ms: u64,
    pub nodes: Vec<NodeStatusView>,
    pub acs: Vec<AcStatusView>,
    pub edges: Vec<TreeEdge>,
    pub plant: ThermalSnapshot,
    pub control_enabled: bool,
}

/// Paths of the files written by [`run_to_dir`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutputs {
    pub dir: PathBuf,
    pub trace: PathBuf,
    pub readings: PathBuf,
    pub events: PathBuf,
    pub summary: PathBuf,
}

impl RunOutputs {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            trace: dir.join("trace.jsonl"),
            readings: dir.join("readings.csv"),
            events: dir.join("events.jsonl"),
            summary: dir.join("summary.json"),
        }
    }
}

pub struct World {
    scenario: ScenarioConfig,
    engine: Engine<SimEvent>,
    radio: Radio,
    plant: Plant,
    motes: BTreeMap<NodeId, Mote>,
    base: BaseStation,
    streams: Streams,
    trace: TraceWriter,
    trace_seq: u64,
    rates: EnergyRates,
    origins: BTreeMap<NodeId, OriginLog>,
    pending_commands: BTreeMap<u16, String>,
    commands: CommandStats,
    switches: Vec<ParentSwitch>,
    zones: ZoneLog,
    processed: u64,
    last_tick: SimTime,
}

impl World {
    /// Builds a world from a scenario, rejecting it when validation fails.
    pub fn new(scenario: ScenarioConfig) -> Result<Self> {
        let violations = validate_scenario(&scenario);
        if !violations.is_empty() {
            let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::Config(text.join("; ")));
        }
        let plant = Plant::new(&scenario.plant)?;
        let radio = Radio::new(&scenario.radio);
        let params = CtpParams::from(&scenario.ctp);
        let motes = scenario
            .nodes
            .iter()
            .map(|n| {
                let sink = n.role == NodeRole::Sink;
                let mote = Mote {
                    role: n.role,
                    ac: n.ac.clone(),
                    ctp: CtpNode::new(n.id, sink, params),
                    energy: EnergyAccount::new(n.id, n.power, scenario.energy.battery_budget_mj),
                    silenced: false,
                    sample_period_ms: n.sample_period_ms(),
                };
                (n.id, mote)
            })
            .collect();
        let mut world = Self {
            base: BaseStation::new(&scenario),
            rates: EnergyRates::from(&scenario.energy),
            streams: Streams::new(scenario.run.seed),
            engine: Engine::new(),
            trace: TraceWriter::disabled(),
            trace_seq: 0,
            radio,
            plant,
            motes,
            origins: BTreeMap::new(),
            pending_commands: BTreeMap::new(),
            commands: CommandStats::default(),
            switches: Vec::new(),
            zones: ZoneLog::default(),
            processed: 0,
            last_tick: SimTime::ZERO,
            scenario,
        };
        world.zones.minute_means = vec![Vec::new(); world.plant.zones().len()];
        world.zones.acc = vec![(0.0, 0); world.plant.zones().len()];
        world.schedule_initial()?;
        Ok(world)
    }

    /// Streams trace records into `out` at the scenario's trace level.
    pub fn with_trace(mut self, out: Box<dyn Write + Send>) -> Self {
        self.trace = TraceWriter::new(out, self.scenario.run.trace);
        self
    }

    fn schedule_initial(&mut self) -> Result<()> {
        let t0 = SimTime::ZERO;
        self.engine.schedule(t0, Target::System, SimEvent::Tick)?;
        let c = &self.scenario.controller;
        self.engine.schedule(
            SimTime::from_millis(c.liveness_check_ms),
            Target::System,
            SimEvent::Liveness,
        )?;
        self.engine
            .schedule(SimTime::from_millis(c.period_ms), Target::System, SimEvent::Control)?;
        let ids: Vec<NodeId> = self.motes.keys().copied().collect();
        for id in ids {
            let beacon_at = self.beacon_delay(id, true);
            self.engine
                .schedule(SimTime::ZERO + beacon_at, Target::Node(id), SimEvent::Beacon)?;
            if let Some(p) = self.motes[&id].sample_period_ms {
                let phase = self.streams.get(id, Purpose::Timer).random_range(0..p);
                self.engine
                    .schedule(SimTime::from_millis(phase), Target::Node(id), SimEvent::Sample)?;
            }
        }
        for (i, step) in self.scenario.script.iter().enumerate() {
            self.engine
                .schedule(SimTime::from_millis(step.at_ms), Target::System, SimEvent::Script(i))?;
        }
        Ok(())
    }

    /// Next beacon delay: the interval with ±jitter, or a random fraction of
    /// it for the first beacon.
    fn beacon_delay(&mut self, id: NodeId, first: bool) -> Duration {
        let interval = self.scenario.ctp.beacon_interval_ms as f64;
        let j = self.scenario.ctp.beacon_jitter;
        let rng = self.streams.get(id, Purpose::Timer);
        let ms = if first {
            rng.random::<f64>() * interval
        } else {
            interval * (1.0 + j * (2.0 * rng.random::<f64>() - 1.0))
        };
        Duration::from_millis(ms.round().max(1.0) as u64)
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub fn base(&self) -> &BaseStation {
        &self.base
    }

    pub fn base_mut(&mut self) -> &mut BaseStation {
        &mut self.base
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn plant_mut(&mut self) -> &mut Plant {
        &mut self.plant
    }

    pub fn ctp(&self, id: NodeId) -> Option<&CtpNode> {
        self.motes.get(&id).map(|m| &m.ctp)
    }

    pub fn energy(&self, id: NodeId) -> Option<&EnergyAccount> {
        self.motes.get(&id).map(|m| &m.energy)
    }

    pub fn parent_switches(&self) -> &[ParentSwitch] {
        &self.switches
    }

    pub fn command_stats(&self) -> &CommandStats {
        &self.commands
    }

    pub fn events_processed(&self) -> u64 {
        self.processed
    }

    /// Frames originated by `node` and how many reached the sink.
    pub fn delivery_counts(&self, node: NodeId) -> (u64, u64) {
        self.origins.get(&node).map_or((0, 0), |o| {
            (
                o.times.len() as u64,
                o.delivered.iter().filter(|&&d| d).count() as u64,
            )
        })
    }

    /// Share of `node`'s frames originated in `[from, to)` that reached
    /// the sink.
    pub fn delivery_ratio(&self, node: NodeId, from: SimTime, to: SimTime) -> Option<f64> {
        self.origins.get(&node)?.ratio(from.millis(), to.millis())
    }

    /// Per-minute mean of each zone's true temperature, in zone order.
    pub fn zone_minute_means(&self) -> &[Vec<f64>] {
        &self.zones.minute_means
    }

    pub fn apply_operator(&mut self, cmd: OperatorCommand) -> Result<()> {
        match cmd {
            OperatorCommand::SetTarget { ac, value } => {
                let now = self.now();
                self.base.set_target(ac.as_deref(), Temperature(value), now)
            }
        }
    }

    /// Runs the configured duration.
    pub fn run(&mut self) -> Result<()> {
        let end = SimTime::from_millis(self.scenario.run.duration_ms);
        self.run_until(end)
    }

    /// Processes every event due at or before `until`.
    pub fn run_until(&mut self, until: SimTime) -> Result<()> {
        while let Some(ev) = self.engine.pop_until(until) {
            self.processed += 1;
            self.handle(ev.target, ev.payload)?;
        }
        self.trace.flush()?;
        Ok(())
    }

    fn handle(&mut self, target: Target, ev: SimEvent) -> Result<()> {
        let now = self.now();
        match (target, ev) {
            (Target::System, SimEvent::Tick) => self.on_tick(now)?,
            (Target::System, SimEvent::Liveness) => {
                for node in self.base.liveness_pass(now) {
                    self.emit(now, "dead_node", Some(node), TraceDetail::None {})?;
                }
                let next = now + Duration::from_millis(self.scenario.controller.liveness_check_ms);
                self.engine.schedule(next, Target::System, SimEvent::Liveness)?;
            }
            (Target::System, SimEvent::Control) => {
                self.on_control(now)?;
                let next = now + Duration::from_millis(self.scenario.controller.period_ms);
                self.engine.schedule(next, Target::System, SimEvent::Control)?;
            }
            (Target::System, SimEvent::Script(i)) => self.on_script(now, i)?,
            (Target::Node(id), SimEvent::Sample) => self.on_sample(now, id)?,
            (Target::Node(id), SimEvent::Beacon) => self.on_beacon(now, id)?,
            (
                Target::Node(id),
                SimEvent::TxDone {
                    to,
                    frame,
                    ok,
                    attempts,
                },
            ) => self.on_tx_done(now, id, to, frame, ok, attempts)?,
            (t, e) => return Err(Error::Config(format!("misaddressed event {e:?} for {t:?}"))),
        }
        Ok(())
    }

    fn emit(&mut self, now: SimTime, kind: &'static str, node: Option<NodeId>, detail: TraceDetail) -> Result<()> {
        if !self.trace.enabled() {
            return Ok(());
        }
        let rec = TraceRecord {
            t: now.millis(),
            seq: self.trace_seq,
            kind,
            node: node.map(|n| n.0),
            detail,
        };
        self.trace_seq += 1;
        self.trace.record(&rec)?;
        Ok(())
    }

    fn on_tick(&mut self, now: SimTime) -> Result<()> {
        self.plant.advance_to(now);
        let dt = now.saturating_sub(self.last_tick);
        self.last_tick = now;
        let ids: Vec<NodeId> = self.motes.keys().copied().collect();
        for id in ids {
            let m = self.motes.get_mut(&id).expect("known mote");
            if m.silenced {
                continue;
            }
            if charge_idle_listen(&mut m.energy, &self.rates, dt, now) {
                self.depleted(now, id)?;
            }
        }
        for (i, &t) in self.plant.temperatures().iter().enumerate() {
            let a = &mut self.zones.acc[i];
            a.0 += t;
            a.1 += 1;
        }
        if (now.millis() + TICK_MS).is_multiple_of(SimTime::MS_PER_MINUTE) {
            for (i, a) in self.zones.acc.iter_mut().enumerate() {
                if a.1 > 0 {
                    self.zones.minute_means[i].push(a.0 / f64::from(a.1));
                }
                *a = (0.0, 0);
            }
        }
        self.engine
            .schedule(now + Duration::from_millis(TICK_MS), Target::System, SimEvent::Tick)?;
        Ok(())
    }

    fn depleted(&mut self, now: SimTime, id: NodeId) -> Result<()> {
        log::info!("{id} battery depleted at {now}");
        self.emit(now, "depleted", Some(id), TraceDetail::None {})
    }

    fn charge(&mut self, now: SimTime, id: NodeId, mj: f64) -> Result<()> {
        let m = self.motes.get_mut(&id).expect("known mote");
        if m.energy.charge(mj, now) {
            self.depleted(now, id)?;
        }
        Ok(())
    }

    fn on_sample(&mut self, now: SimTime, id: NodeId) -> Result<()> {
        let Some(m) = self.motes.get(&id) else {
            return Ok(());
        };
        if !m.on() {
            return Ok(());
        }
        let period = m.sample_period_ms.expect("sampling node has a period");
        self.plant.advance_to(now);
        let reading = self
            .plant
            .read_sensor(id, now, self.streams.get(id, Purpose::Sensor))?;
        self.charge(now, id, self.rates.sample_mj)?;
        let m = self.motes.get_mut(&id).expect("known mote");
        let (frame, evicted) = m.ctp.originate(DataPayload::from_reading(&reading));
        let log = self.origins.entry(id).or_default();
        log.times.push(now.millis());
        log.delivered.push(false);
        self.emit(
            now,
            "sample",
            Some(id),
            TraceDetail::Sample {
                seqno: frame.seqno,
                queued: true,
            },
        )?;
        if let Some(f) = evicted {
            self.dropped(now, id, &f, DropReason::QueueFull)?;
        }
        self.engine
            .schedule(now + Duration::from_millis(period), Target::Node(id), SimEvent::Sample)?;
        self.try_send(now, id)
    }

    fn on_beacon(&mut self, now: SimTime, id: NodeId) -> Result<()> {
        if !self.motes[&id].on() {
            return Ok(());
        }
        let frame = self.motes.get_mut(&id).expect("known mote").ctp.make_beacon();
        self.charge(now, id, self.rates.tx_mj_per_attempt)?;
        let neighbors = self.radio.neighbors(id).to_vec();
        let mut heard_by = Vec::new();
        for nb in neighbors {
            let prr = self.radio.prr(id, nb);
            let got = transmit(prr, self.streams.get(id, Purpose::Radio));
            if !got || !self.motes.get(&nb).is_some_and(Mote::on) {
                continue;
            }
            heard_by.push(nb.0);
            self.charge(now, nb, self.rates.rx_mj_per_frame)?;
            let change = self
                .motes
                .get_mut(&nb)
                .expect("known mote")
                .ctp
                .on_beacon(id, &frame);
            if let Some(c) = change {
                self.parent_changed(now, nb, c)?;
            }
        }
        let me = &self.motes[&id].ctp;
        let (path_etx, parent) = (me.path_etx(), me.parent());
        self.emit(
            now,
            "beacon",
            Some(id),
            TraceDetail::Beacon {
                path_etx: finite_or_neg(path_etx),
                parent: parent.map(|p| p.0),
                heard_by: heard_by.clone(),
            },
        )?;
        let next = now + self.beacon_delay(id, false);
        self.engine.schedule(next, Target::Node(id), SimEvent::Beacon)?;
        for nb in heard_by {
            self.try_send(now, NodeId(nb))?;
        }
        Ok(())
    }

    fn parent_changed(&mut self, now: SimTime, id: NodeId, c: ParentChange) -> Result<()> {
        self.switches.push(ParentSwitch {
            t: now.millis(),
            node: id,
            from: c.from,
            to: c.to,
        });
        self.emit(
            now,
            "parent",
            Some(id),
            TraceDetail::Parent {
                from: c.from.map(|n| n.0),
                to: c.to.map(|n| n.0),
                path_etx: finite_or_neg(c.path_etx),
            },
        )
    }

    /// Starts the next link-layer transmission of `id`, if any. Every
    /// attempt is drawn now; the outcome lands after all attempts' airtime.
    fn try_send(&mut self, now: SimTime, id: NodeId) -> Result<()> {
        let Some(m) = self.motes.get_mut(&id) else {
            return Ok(());
        };
        if !m.on() {
            return Ok(());
        }
        let Some((frame, to)) = m.ctp.next_transmission() else {
            return Ok(());
        };
        let max = m.ctp.max_attempts();
        let listening = self.motes.get(&to).is_some_and(Mote::on);
        let prr = self.radio.prr(id, to);
        let rng = self.streams.get(id, Purpose::Radio);
        let mut attempts = 0;
        let mut ok = false;
        while attempts < max {
            attempts += 1;
            if transmit(prr, rng) && listening {
                ok = true;
                break;
            }
        }
        self.charge(now, id, self.rates.tx_mj_per_attempt * f64::from(attempts))?;
        let done = now + Duration::from_millis(self.scenario.radio.attempt_ms * u64::from(attempts));
        self.engine.schedule(
            done,
            Target::Node(id),
            SimEvent::TxDone {
                to,
                frame,
                ok,
                attempts,
            },
        )?;
        Ok(())
    }

    fn on_tx_done(&mut self, now: SimTime, id: NodeId, to: NodeId, frame: Frame, ok: bool, attempts: u32) -> Result<()> {
        let report = self
            .motes
            .get_mut(&id)
            .expect("known mote")
            .ctp
            .on_tx_done(to, ok, attempts);
        self.emit(
            now,
            "tx",
            Some(id),
            TraceDetail::Tx {
                frame: frame.frame_type().name(),
                origin: frame.origin.0,
                seqno: frame.seqno,
                to: to.0,
                attempts,
                ok,
            },
        )?;
        if let Some(c) = report.and_then(|r| r.parent_change) {
            self.parent_changed(now, id, c)?;
        }
        if ok {
            self.charge(now, to, self.rates.rx_mj_per_frame)?;
            let received = self
                .motes
                .get_mut(&to)
                .expect("known mote")
                .ctp
                .on_receive(id, frame);
            self.on_received(now, to, received, &frame)?;
            self.try_send(now, to)?;
        } else {
            self.dropped(now, id, &frame, DropReason::RetriesExhausted)?;
        }
        self.try_send(now, id)
    }

    fn on_received(&mut self, now: SimTime, at: NodeId, r: Received, frame: &Frame) -> Result<()> {
        match r {
            Received::Deliver(f) => {
                let log = self.origins.entry(f.origin).or_default();
                if let Some(i) = log.index_of(f.seqno) {
                    log.delivered[i] = true;
                }
                self.base.ingest(&f, now);
                self.emit(
                    now,
                    "deliver",
                    Some(at),
                    TraceDetail::Frame {
                        origin: f.origin.0,
                        seqno: f.seqno,
                        thl: f.thl,
                        outcome: "delivered",
                    },
                )?;
            }
            Received::Queued { evicted } => {
                if let Some(f) = evicted {
                    self.dropped(now, at, &f, DropReason::QueueFull)?;
                }
            }
            Received::Apply(cmd) => self.apply_command(now, at, frame, cmd)?,
            Received::Drop(reason) => {
                // Duplicates of a command already applied are harmless.
                if reason == DropReason::Duplicate {
                    self.emit(
                        now,
                        "drop",
                        Some(at),
                        TraceDetail::Frame {
                            origin: frame.origin.0,
                            seqno: frame.seqno,
                            thl: frame.thl,
                            outcome: reason.name(),
                        },
                    )?;
                } else {
                    self.dropped(now, at, frame, reason)?;
                }
            }
        }
        Ok(())
    }

    fn apply_command(&mut self, now: SimTime, at: NodeId, frame: &Frame, cmd: CommandPayload) -> Result<()> {
        self.pending_commands.remove(&frame.seqno);
        let Some(ac) = self.motes[&at].ac.clone() else {
            return Ok(());
        };
        self.plant.advance_to(now);
        self.plant.apply_setpoint(&ac, cmd.commanded_temp())?;
        self.commands.applied += 1;
        self.emit(
            now,
            "apply",
            Some(at),
            TraceDetail::Command {
                ac,
                dest: cmd.dest.0,
                value: cmd.commanded_temp().0,
            },
        )
    }

    fn dropped(&mut self, now: SimTime, at: NodeId, frame: &Frame, reason: DropReason) -> Result<()> {
        if frame.frame_type() == FrameType::Command {
            if let Some(ac) = self.pending_commands.remove(&frame.seqno) {
                self.commands.failed += 1;
                self.base.command_failed(&ac, now, false);
            }
        }
        self.emit(
            now,
            "drop",
            Some(at),
            TraceDetail::Frame {
                origin: frame.origin.0,
                seqno: frame.seqno,
                thl: frame.thl,
                outcome: reason.name(),
            },
        )
    }

    fn on_control(&mut self, now: SimTime) -> Result<()> {
        let decisions = self.base.control_step(now);
        for d in decisions {
            let Some(value) = d.command else { continue };
            self.commands.issued += 1;
            self.emit(
                now,
                "command",
                Some(NodeId::SINK),
                TraceDetail::Command {
                    ac: d.ac.clone(),
                    dest: d.controller.0,
                    value: value.0,
                },
            )?;
            let payload = CommandPayload::new(d.controller, value)?;
            let sink = self.sink_id();
            let routed = self
                .motes
                .get_mut(&sink)
                .expect("sink exists")
                .ctp
                .route_command(payload);
            match routed {
                Ok(f) => {
                    self.pending_commands.insert(f.seqno, d.ac.clone());
                    self.try_send(now, sink)?;
                }
                Err(Error::NoRoute(_)) => {
                    self.commands.no_route += 1;
                    self.base.command_failed(&d.ac, now, true);
                    self.emit(
                        now,
                        "no_route",
                        Some(sink),
                        TraceDetail::Command {
                            ac: d.ac.clone(),
                            dest: d.controller.0,
                            value: value.0,
                        },
                    )?;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    fn sink_id(&self) -> NodeId {
        self.motes
            .iter()
            .find(|(_, m)| m.role == NodeRole::Sink)
            .map_or(NodeId::SINK, |(&id, _)| id)
    }

    fn on_script(&mut self, now: SimTime, i: usize) -> Result<()> {
        let action = self.scenario.script[i].action.clone();
        self.emit(
            now,
            "script",
            None,
            TraceDetail::Text {
                info: format!("{action:?}"),
            },
        )?;
        match action {
            ScriptAction::SetLinkPrr { from, to, prr } => self.radio.set_link(from, to, prr),
            ScriptAction::Silence { node } => {
                if let Some(m) = self.motes.get_mut(&node) {
                    m.silenced = true;
                }
            }
            ScriptAction::Resume { node } => {
                let Some(m) = self.motes.get_mut(&node) else {
                    return Ok(());
                };
                if !m.silenced {
                    return Ok(());
                }
                m.silenced = false;
                if m.sample_period_ms.is_some() {
                    self.engine.schedule(now, Target::Node(node), SimEvent::Sample)?;
                }
                let next = now + self.beacon_delay(node, true);
                self.engine.schedule(next, Target::Node(node), SimEvent::Beacon)?;
                self.try_send(now, node)?;
            }
            ScriptAction::SetTarget { ac, value } => {
                if let Err(e) = self.base.set_target(ac.as_deref(), Temperature(value), now) {
                    log::warn!("scripted target change rejected: {e}");
                }
            }
            ScriptAction::SetSensorChannel { channel } => self.radio.set_sensor_channel(channel),
        }
        Ok(())
    }

    pub fn snapshot(&self) -> StatusSnapshot {
        let store = self.base.store();
        let nodes = self
            .scenario
            .nodes
            .iter()
            .map(|n| {
                let m = &self.motes[&n.id];
                let status = self.base.liveness().status(n.id);
                let sink = n.role == NodeRole::Sink;
                NodeStatusView {
                    id: n.id,
                    role: n.role,
                    label: n.label.clone(),
                    state: status.map_or(NodeState::Alive, |s| s.state),
                    last_seen_ms: status.and_then(|s| s.last_seen).map(SimTime::millis),
                    parent: m.ctp.parent(),
                    path_etx: finite(if sink { 0.0 } else { m.ctp.path_etx() }),
                    latest: store.latest(n.id).map(|r| LatestReading {
                        timestamp: r.timestamp,
                        temperature: r.temperature,
                        humidity: r.humidity,
                        intensity: r.intensity,
                    }),
                    energy_spent_mj: m.energy.spent,
                    depleted: m.energy.is_depleted(),
                }
            })
            .collect();
        let acs = self
            .base
            .units()
            .iter()
            .map(|u| {
                let (setpoint, cooling_w) = self
                    .plant
                    .acs()
                    .iter()
                    .position(|a| a.id == u.ac)
                    .map_or((f64::NAN, 0.0), |i| (self.plant.acs()[i].setpoint.0, self.plant.cooling_w(i)));
                AcStatusView {
                    id: u.ac.clone(),
                    controller: u.controller,
                    target: u.target.0,
                    last_command: u.last_command.0,
                    setpoint,
                    cooling_w,
                    fail_safe: u.fail_safe,
                }
            })
            .collect();
        let edges = self
            .motes
            .iter()
            .filter_map(|(&child, m)| m.ctp.parent().map(|parent| TreeEdge { child, parent }))
            .collect();
        StatusSnapshot {
            sim_time_ms: self.now().millis(),
            nodes,
            acs,
            edges,
            plant: self.plant.snapshot(),
            control_enabled: self.base.control_enabled(),
        }
    }

    pub fn summary(&self) -> Summary {
        let p = &self.scenario.plant;
        let day_night = report::day_night_means(
            self.base.store().rows(),
            u64::from(p.day_start_h),
            u64::from(p.day_end_h),
        );
        let nodes: Vec<NodeSummary> = self
            .scenario
            .nodes
            .iter()
            .map(|n| {
                let m = &self.motes[&n.id];
                let (originated, delivered) = self.delivery_counts(n.id);
                NodeSummary {
                    id: n.id,
                    role: n.role,
                    originated,
                    delivered,
                    delivery_ratio: (originated > 0).then(|| delivered as f64 / originated as f64),
                    parent: m.ctp.parent(),
                    path_etx: finite(if n.role == NodeRole::Sink { 0.0 } else { m.ctp.path_etx() }),
                    energy_spent_mj: m.energy.spent,
                    depleted_at_ms: m.energy.depleted_at.map(SimTime::millis),
                    state: self.base.liveness().status(n.id).map(|s| s.state),
                }
            })
            .collect();
        let (o, d) = nodes
            .iter()
            .fold((0, 0), |(o, d), n| (o + n.originated, d + n.delivered));
        let zones = self
            .plant
            .zones()
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let mm = &self.zones.minute_means[i];
                ZoneSummary {
                    id: z.id.clone(),
                    final_c: self.plant.temperatures()[i],
                    mean_c: (!mm.is_empty()).then(|| mm.iter().sum::<f64>() / mm.len() as f64),
                    min_minute_mean_c: mm.iter().copied().reduce(f64::min),
                    max_minute_mean_c: mm.iter().copied().reduce(f64::max),
                }
            })
            .collect();
        Summary {
            scenario: self.scenario.name.clone(),
            seed: self.scenario.run.seed,
            duration_ms: self.now().millis(),
            events: self.processed,
            delivery_ratio: (o > 0).then(|| d as f64 / o as f64),
            nodes,
            day_night,
            day_start_h: p.day_start_h,
            day_end_h: p.day_end_h,
            commands: self.commands.clone(),
            parent_switches: self.switches.len(),
            dead_nodes: self
                .base
                .liveness()
                .statuses()
                .filter(|s| s.state == NodeState::Dead)
                .map(|s| s.node)
                .collect(),
            zones,
            cooling_energy_j: self.plant.total_cooling_energy_j(),
            readings: self.base.store().len(),
        }
    }

    pub fn write_readings<W: Write>(&self, w: W) -> Result<()> {
        self.base.store().write_csv(w)?;
        Ok(())
    }

    pub fn write_events<W: Write>(&self, mut w: W) -> Result<()> {
        for e in self.base.events() {
            serde_json::to_writer(&mut w, e).map_err(|e| Error::Io(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes readings, events and summary next to a trace already streamed
    /// to `out.trace`.
    pub fn write_outputs(&self, out: &RunOutputs) -> Result<()> {
        self.write_readings(BufWriter::new(File::create(&out.readings)?))?;
        self.write_events(BufWriter::new(File::create(&out.events)?))?;
        let summary = serde_json::to_string_pretty(&self.summary()).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(&out.summary, summary + "\n")?;
        Ok(())
    }
}

/// Runs `scenario` to completion, writing all outputs into `dir`.
pub fn run_to_dir(scenario: ScenarioConfig, dir: &Path) -> Result<(RunOutputs, Summary)> {
    std::fs::create_dir_all(dir)?;
    let out = RunOutputs::in_dir(dir);
    let trace = BufWriter::new(File::create(&out.trace)?);
    let mut world = World::new(scenario)?.with_trace(Box::new(trace));
    world.run()?;
    world.write_outputs(&out)?;
    Ok((out, world.summary()))
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Trace encoding of a path ETX: the value, or -1 for "no route".
fn finite_or_neg(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        -1.0
    }
}

/// True when a battery node is configured.
pub fn has_battery_nodes(s: &ScenarioConfig) -> bool {
    s.nodes.iter().any(|n| n.power == PowerSource::Battery)
}

