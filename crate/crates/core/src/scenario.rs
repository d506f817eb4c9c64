//! Scenario file schema.
//!
//! Scenarios are JSON documents; unknown keys are rejected so that typos in
//! fixtures surface as load errors instead of silently falling back to
//! defaults. `schema/scenario.schema.json` documents the same structure.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{NodeId, NodeRole, PowerSource};
use crate::error::{Error, Result};

pub const FIG9_SCENARIO: &str = include_str!("../scenarios/fig9.scenario");
pub const INTERFERENCE_SCENARIO: &str = include_str!("../scenarios/interference.scenario");
pub const BATTERY_SCENARIO: &str = include_str!("../scenarios/battery.scenario");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub radio: RadioConfig,
    pub nodes: Vec<NodeConfig>,
    pub plant: PlantConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub ctp: CtpConfig,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// The two-room deployment: sink and relay in the base-station room,
    /// four sensors and two air-conditioner controllers in the server room.
    pub fn fig9() -> Self {
        Self::from_json(FIG9_SCENARIO).expect("bundled fig9 scenario parses")
    }

    pub fn interference() -> Self {
        Self::from_json(INTERFERENCE_SCENARIO).expect("bundled interference scenario parses")
    }

    pub fn battery() -> Self {
        Self::from_json(BATTERY_SCENARIO).expect("bundled battery scenario parses")
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Sets the reception ratio of every configured link.
    pub fn set_all_links(&mut self, prr: f64) {
        for l in &mut self.radio.links {
            l.prr = prr;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    /// IEEE 802.15.4 channel, 11..=26.
    pub sensor_channel: u8,
    #[serde(default)]
    pub interferers: Vec<InterfererConfig>,
    /// Multiplicative reception penalty per overlapping, fully active
    /// Wi-Fi interferer.
    #[serde(default = "defaults::interference_penalty")]
    pub interference_penalty: f64,
    /// Time one link-layer attempt (airtime, ack wait, backoff) occupies.
    #[serde(default = "defaults::attempt_ms")]
    pub attempt_ms: u64,
    pub links: Vec<LinkConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfererConfig {
    /// IEEE 802.11 channel: 1, 6 or 11.
    pub channel: u8,
    pub activity: f64,
}

/// Directed link with its base packet reception ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub from: NodeId,
    pub to: NodeId,
    pub prr: f64,
}

impl LinkConfig {
    pub fn new(from: NodeId, to: NodeId, prr: f64) -> Self {
        Self { from, to, prr }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: NodeId,
    pub role: NodeRole,
    #[serde(default)]
    pub power: PowerSource,
    /// Air conditioner driven by this node (controllers only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ac: Option<String>,
    /// Sampling period; sensors default to 500 ms (120 samples/minute).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_period_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

impl NodeConfig {
    pub fn new(id: NodeId, role: NodeRole) -> Self {
        Self {
            id,
            role,
            power: PowerSource::Line,
            ac: None,
            sample_period_ms: None,
            label: String::new(),
        }
    }

    pub fn sample_period_ms(&self) -> Option<u64> {
        match self.role {
            NodeRole::Sensor | NodeRole::Controller => {
                Some(self.sample_period_ms.unwrap_or(defaults::SAMPLE_PERIOD_MS))
            }
            NodeRole::Sink | NodeRole::Relay => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub ambient_c: f64,
    pub zones: Vec<ZoneConfig>,
    #[serde(default)]
    pub couplings: Vec<CouplingConfig>,
    pub acs: Vec<AcConfig>,
    #[serde(default)]
    pub racks: Vec<RackConfig>,
    pub sensors: Vec<SensorPlacement>,
    #[serde(default = "defaults::noise_sigma")]
    pub noise_sigma_c: f64,
    #[serde(default = "defaults::dt_ms")]
    pub dt_ms: u64,
    /// Start of the day window on the scenario clock, hours.
    #[serde(default = "defaults::day_start")]
    pub day_start_h: u32,
    #[serde(default = "defaults::day_end")]
    pub day_end_h: u32,
    #[serde(default = "defaults::humidity")]
    pub humidity: DiurnalProfile,
    #[serde(default = "defaults::light")]
    pub light: DiurnalProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneConfig {
    pub id: String,
    /// J/°C.
    pub heat_capacity: f64,
    /// Heat input during the day window, W.
    pub load_day_w: f64,
    pub load_night_w: f64,
    /// Conductance to ambient, W/°C.
    #[serde(default)]
    pub leak_w_per_c: f64,
    pub initial_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub a: String,
    pub b: String,
    /// W/°C.
    pub conductance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcConfig {
    pub id: String,
    /// Zone whose air the unit's thermostat reads (return air).
    pub zone: String,
    /// Zone the unit discharges cold air into; defaults to `zone`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supply_zone: Option<String>,
    pub setpoint_c: f64,
    pub max_cooling_w: f64,
    /// Proportional gain of the unit's internal thermostat, W/°C.
    pub gain_w_per_c: f64,
    #[serde(default)]
    pub deadband_c: f64,
    /// Sensors whose readings steer this unit's setpoint.
    pub sensors: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RackConfig {
    pub id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    /// Behind the servers, in the exhaust stream.
    Hot,
    /// In front of the servers.
    Normal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorPlacement {
    pub node: NodeId,
    pub zone: String,
    pub kind: SensorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rack: Option<String>,
}

/// `mean + amplitude * cos(2π (hour - peak_hour) / 24)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiurnalProfile {
    pub mean: f64,
    pub amplitude: f64,
    pub peak_hour: f64,
}

impl DiurnalProfile {
    pub fn at_hour(&self, hour: f64) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * (hour - self.peak_hour) / 24.0;
        self.mean + self.amplitude * phase.cos()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub enabled: bool,
    pub target_c: f64,
    pub period_ms: u64,
    /// |error| at or below this is "on target".
    pub band_c: f64,
    /// Change in error per cycle that counts as improving.
    pub trend_c: f64,
    /// Escalation step while the error persists.
    pub step_c: f64,
    /// Per-cycle move back toward the target while on target.
    pub relax_c: f64,
    pub fail_safe_c: f64,
    pub dead_after_ms: u64,
    pub liveness_check_ms: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            target_c: 25.0,
            period_ms: 60_000,
            band_c: 0.25,
            trend_c: 0.25,
            step_c: 0.5,
            relax_c: 0.5,
            fail_safe_c: 18.0,
            dead_after_ms: 300_000,
            liveness_check_ms: 1_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CtpConfig {
    pub beacon_interval_ms: u64,
    /// Fractional jitter applied to each beacon interval.
    pub beacon_jitter: f64,
    /// Weight of the previous estimate in the link-quality EWMA.
    pub ewma_alpha: f64,
    /// Beacons (or data attempts) per estimator window.
    pub window: u32,
    /// Beacon reception ratio under which the parent link is considered broken.
    pub broken_link_prr: f64,
    pub hysteresis_etx: f64,
    pub max_attempts: u32,
    pub dedup_cache: usize,
    pub queue_depth: usize,
    pub thl_limit: u8,
}

impl Default for CtpConfig {
    fn default() -> Self {
        Self {
            beacon_interval_ms: 5_000,
            beacon_jitter: 0.1,
            ewma_alpha: 0.9,
            window: 5,
            broken_link_prr: 0.25,
            hysteresis_etx: 0.5,
            max_attempts: 30,
            dedup_cache: 64,
            queue_depth: 12,
            thl_limit: 32,
        }
    }
}

/// Energy is accounted in millijoules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub battery_budget_mj: f64,
    /// Radio listening plus MCU, mW (= mJ/s).
    pub idle_listen_mw: f64,
    pub tx_mj_per_attempt: f64,
    pub rx_mj_per_frame: f64,
    pub sample_mj: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            battery_budget_mj: 18_000_000.0,
            idle_listen_mw: 60.0,
            tx_mj_per_attempt: 0.08,
            rx_mj_per_frame: 0.02,
            sample_mj: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    /// Every executed engine event.
    #[default]
    Full,
    /// Routing and control events only: no beacons, samples or per-frame
    /// transmissions.
    Routing,
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub duration_ms: u64,
    pub seed: u64,
    pub trace: TraceLevel,
    /// Added to exported timestamps.
    pub epoch_offset_ms: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            duration_ms: 3_600_000,
            seed: 1,
            trace: TraceLevel::Full,
            epoch_offset_ms: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub at_ms: u64,
    pub action: ScriptAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptAction {
    /// Change a directed link's base reception ratio.
    SetLinkPrr { from: NodeId, to: NodeId, prr: f64 },
    /// Switch a node's radio off; it neither sends nor receives.
    Silence { node: NodeId },
    Resume { node: NodeId },
    /// Operator target change, as from the web API.
    SetTarget { ac: Option<String>, value: f64 },
    SetSensorChannel { channel: u8 },
}

pub(crate) mod defaults {
    pub const SAMPLE_PERIOD_MS: u64 = 500;

    pub fn interference_penalty() -> f64 {
        0.5
    }
    pub fn attempt_ms() -> u64 {
        8
    }
    pub fn noise_sigma() -> f64 {
        0.1
    }
    pub fn dt_ms() -> u64 {
        1_000
    }
    pub fn day_start() -> u32 {
        8
    }
    pub fn day_end() -> u32 {
        20
    }
    pub fn humidity() -> super::DiurnalProfile {
        super::DiurnalProfile {
            mean: 50.0,
            amplitude: 8.0,
            peak_hour: 5.0,
        }
    }
    pub fn light() -> super::DiurnalProfile {
        super::DiurnalProfile {
            mean: 120.0,
            amplitude: 100.0,
            peak_hour: 14.0,
        }
    }
}
