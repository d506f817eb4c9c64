//! Lumped thermal model of the room.
//!
//! Each zone is one heat capacity. Per step of `dt` seconds:
//!
//! ```text
//! C dT/dt = load(t) - cooling + Σ g (T_other - T) + leak (ambient - T)
//! ```
//!
//! An air conditioner reads the air of one zone (its return air) and
//! discharges into a supply zone, by default the same one. Its internal
//! thermostat is proportional: `min(max, gain * (T_return - (setpoint -
//! deadband)))`, zero at or below `setpoint - deadband`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::domain::{NodeId, SensorReading, SimTime, Temperature};
use crate::error::{Error, Result};
use crate::scenario::{DiurnalProfile, PlantConfig, SensorKind};

const MS_PER_HOUR: u64 = 3_600_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Zone {
    pub id: String,
    pub heat_capacity: f64,
    pub load_day_w: f64,
    pub load_night_w: f64,
    pub leak_w_per_c: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcUnit {
    pub id: String,
    pub sense_zone: usize,
    pub supply_zone: usize,
    pub setpoint: Temperature,
    pub max_cooling_w: f64,
    pub gain_w_per_c: f64,
    pub deadband_c: f64,
    /// Cooling delivered since the start of the run, J.
    pub energy_j: f64,
}

impl AcUnit {
    pub fn cooling_w(&self, t_return: f64) -> f64 {
        let threshold = self.setpoint.0 - self.deadband_c;
        (self.gain_w_per_c * (t_return - threshold)).clamp(0.0, self.max_cooling_w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZoneSnapshot {
    pub id: String,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AcSnapshot {
    pub id: String,
    pub setpoint: f64,
    pub cooling_w: f64,
    pub energy_j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThermalSnapshot {
    pub time: SimTime,
    pub zones: Vec<ZoneSnapshot>,
    pub acs: Vec<AcSnapshot>,
}

#[derive(Clone, Debug)]
pub struct Plant {
    zones: Vec<Zone>,
    temps: Vec<f64>,
    couplings: Vec<(usize, usize, f64)>,
    acs: Vec<AcUnit>,
    sensors: BTreeMap<NodeId, (usize, SensorKind)>,
    ambient: f64,
    noise: f64,
    dt_ms: u64,
    day_start_ms: u64,
    day_end_ms: u64,
    humidity: DiurnalProfile,
    light: DiurnalProfile,
    time: SimTime,
}

impl Plant {
    pub fn new(cfg: &PlantConfig) -> Result<Self> {
        let index: BTreeMap<&str, usize> = cfg
            .zones
            .iter()
            .enumerate()
            .map(|(i, z)| (z.id.as_str(), i))
            .collect();
        let zone = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Config(format!("unknown zone: {id}")))
        };
        let mut couplings = Vec::new();
        for c in &cfg.couplings {
            couplings.push((zone(&c.a)?, zone(&c.b)?, c.conductance));
        }
        let mut acs = Vec::new();
        for a in &cfg.acs {
            let sense = zone(&a.zone)?;
            let supply = match &a.supply_zone {
                Some(z) => zone(z)?,
                None => sense,
            };
            if !Temperature(a.setpoint_c).is_valid_command() {
                return Err(Error::SetpointOutOfRange(a.setpoint_c));
            }
            acs.push(AcUnit {
                id: a.id.clone(),
                sense_zone: sense,
                supply_zone: supply,
                setpoint: Temperature(a.setpoint_c),
                max_cooling_w: a.max_cooling_w,
                gain_w_per_c: a.gain_w_per_c,
                deadband_c: a.deadband_c,
                energy_j: 0.0,
            });
        }
        let mut sensors = BTreeMap::new();
        for s in &cfg.sensors {
            sensors.insert(s.node, (zone(&s.zone)?, s.kind));
        }
        let zones: Vec<Zone> = cfg
            .zones
            .iter()
            .map(|z| Zone {
                id: z.id.clone(),
                heat_capacity: z.heat_capacity,
                load_day_w: z.load_day_w,
                load_night_w: z.load_night_w,
                leak_w_per_c: z.leak_w_per_c,
            })
            .collect();
        for z in &zones {
            if z.heat_capacity.is_nan() || z.heat_capacity <= 0.0 || z.load_day_w < 0.0 || z.load_night_w < 0.0 {
                return Err(Error::Config(format!(
                    "zone {}: heat capacity must be positive and loads non-negative",
                    z.id
                )));
            }
        }
        if cfg.dt_ms == 0 {
            return Err(Error::Config("plant dt_ms must be positive".into()));
        }
        let plant = Self {
            temps: cfg.zones.iter().map(|z| z.initial_c).collect(),
            zones,
            couplings,
            acs,
            sensors,
            ambient: cfg.ambient_c,
            noise: cfg.noise_sigma_c,
            dt_ms: cfg.dt_ms,
            day_start_ms: u64::from(cfg.day_start_h) * MS_PER_HOUR,
            day_end_ms: u64::from(cfg.day_end_h) * MS_PER_HOUR,
            humidity: cfg.humidity,
            light: cfg.light,
            time: SimTime::ZERO,
        };
        plant.check_stability()?;
        Ok(plant)
    }

    /// Explicit Euler is stable while `dt < C / Σ conductances` for every
    /// zone, counting the thermostat gain of a unit that reads and cools
    /// the same zone.
    fn check_stability(&self) -> Result<()> {
        let dt_s = self.dt_ms as f64 / 1000.0;
        for (i, z) in self.zones.iter().enumerate() {
            let mut g = z.leak_w_per_c;
            for &(a, b, c) in &self.couplings {
                if a == i || b == i {
                    g += c;
                }
            }
            for ac in &self.acs {
                if ac.sense_zone == i && ac.supply_zone == i {
                    g += ac.gain_w_per_c;
                }
            }
            if g > 0.0 {
                let limit_s = z.heat_capacity / g;
                if dt_s > limit_s {
                    return Err(Error::UnstableStep {
                        zone: z.id.clone(),
                        dt_s,
                        limit_s,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn time(&self) -> SimTime {
        self.time
    }

    pub fn dt_ms(&self) -> u64 {
        self.dt_ms
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.temps
    }

    pub fn zone_index(&self, id: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.id == id)
    }

    pub fn acs(&self) -> &[AcUnit] {
        &self.acs
    }

    pub fn ac(&self, id: &str) -> Option<&AcUnit> {
        self.acs.iter().find(|a| a.id == id)
    }

    pub fn set_temperature(&mut self, zone: usize, t: f64) {
        self.temps[zone] = t;
    }

    pub fn set_load(&mut self, zone: usize, day_w: f64, night_w: f64) {
        self.zones[zone].load_day_w = day_w;
        self.zones[zone].load_night_w = night_w;
    }

    pub fn sensor_zone(&self, node: NodeId) -> Option<usize> {
        self.sensors.get(&node).map(|s| s.0)
    }

    pub fn is_day(&self, t: SimTime) -> bool {
        let tod = t.time_of_day_ms();
        tod >= self.day_start_ms && tod < self.day_end_ms
    }

    fn load(&self, zone: usize, t: SimTime) -> f64 {
        let z = &self.zones[zone];
        if self.is_day(t) {
            z.load_day_w
        } else {
            z.load_night_w
        }
    }

    pub fn cooling_w(&self, ac: usize) -> f64 {
        let a = &self.acs[ac];
        a.cooling_w(self.temps[a.sense_zone])
    }

    /// Replaces a unit's setpoint from the next step on.
    pub fn apply_setpoint(&mut self, ac: &str, temp: Temperature) -> Result<()> {
        if !temp.is_valid_command() {
            return Err(Error::SetpointOutOfRange(temp.0));
        }
        let unit = self
            .acs
            .iter_mut()
            .find(|a| a.id == ac)
            .ok_or_else(|| Error::UnknownAc(ac.to_string()))?;
        unit.setpoint = temp;
        Ok(())
    }

    /// Advances the state by one configured step.
    pub fn step(&mut self) {
        let dt_s = self.dt_ms as f64 / 1000.0;
        let mut flow: Vec<f64> = (0..self.zones.len())
            .map(|i| {
                let z = &self.zones[i];
                self.load(i, self.time) + z.leak_w_per_c * (self.ambient - self.temps[i])
            })
            .collect();
        for &(a, b, g) in &self.couplings {
            let q = g * (self.temps[b] - self.temps[a]);
            flow[a] += q;
            flow[b] -= q;
        }
        for i in 0..self.acs.len() {
            let q = self.cooling_w(i);
            let ac = &mut self.acs[i];
            flow[ac.supply_zone] -= q;
            ac.energy_j += q * dt_s;
        }
        for (i, f) in flow.iter().enumerate() {
            self.temps[i] += f * dt_s / self.zones[i].heat_capacity;
        }
        self.time = self.time + std::time::Duration::from_millis(self.dt_ms);
    }

    /// Steps until the plant clock reaches `t`.
    pub fn advance_to(&mut self, t: SimTime) {
        while self.time.millis() + self.dt_ms <= t.millis() {
            self.step();
        }
    }

    pub fn total_cooling_energy_j(&self) -> f64 {
        self.acs.iter().map(|a| a.energy_j).sum()
    }

    pub fn read_sensor<R: Rng + ?Sized>(
        &self,
        node: NodeId,
        at: SimTime,
        rng: &mut R,
    ) -> Result<SensorReading> {
        let &(zone, _) = self.sensors.get(&node).ok_or(Error::UnknownNode(node))?;
        let truth = self.temps[zone];
        let temperature = if self.noise > 0.0 {
            let n = Normal::new(0.0, self.noise).map_err(|e| Error::Config(e.to_string()))?;
            truth + n.sample(rng)
        } else {
            truth
        };
        let hour = at.time_of_day_ms() as f64 / MS_PER_HOUR as f64;
        Ok(SensorReading {
            node,
            time: at,
            temperature: Temperature(temperature),
            humidity: self.humidity.at_hour(hour).clamp(0.0, 100.0),
            light: self.light.at_hour(hour).max(0.0),
        })
    }

    pub fn snapshot(&self) -> ThermalSnapshot {
        ThermalSnapshot {
            time: self.time,
            zones: self
                .zones
                .iter()
                .zip(&self.temps)
                .map(|(z, &t)| ZoneSnapshot {
                    id: z.id.clone(),
                    temperature: t,
                })
                .collect(),
            acs: (0..self.acs.len())
                .map(|i| AcSnapshot {
                    id: self.acs[i].id.clone(),
                    setpoint: self.acs[i].setpoint.0,
                    cooling_w: self.cooling_w(i),
                    energy_j: self.acs[i].energy_j,
                })
                .collect(),
        }
    }
}
