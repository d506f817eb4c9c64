use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::{NodeId, PowerSource, SimTime};
use crate::scenario::EnergyConfig;

/// Energy drawn by one mote, in millijoules.
///
/// Line-powered nodes are still metered but never run out. A battery node
/// whose `spent` reaches `budget` is switched off for good.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccount {
    pub node: NodeId,
    pub budget: f64,
    pub spent: f64,
    pub powered: PowerSource,
    pub depleted_at: Option<SimTime>,
}

impl EnergyAccount {
    pub fn new(node: NodeId, powered: PowerSource, budget: f64) -> Self {
        Self {
            node,
            budget,
            spent: 0.0,
            powered,
            depleted_at: None,
        }
    }

    pub fn is_depleted(&self) -> bool {
        self.depleted_at.is_some()
    }

    /// Adds `mj` to the account. Returns `true` when this charge drains the
    /// battery.
    pub fn charge(&mut self, mj: f64, now: SimTime) -> bool {
        if self.is_depleted() || mj <= 0.0 {
            return false;
        }
        self.spent += mj;
        if self.powered == PowerSource::Battery && self.spent >= self.budget {
            self.depleted_at = Some(now);
            return true;
        }
        false
    }

    pub fn remaining(&self) -> f64 {
        match self.powered {
            PowerSource::Battery => (self.budget - self.spent).max(0.0),
            PowerSource::Line => f64::INFINITY,
        }
    }
}

/// Per-operation costs, taken from the scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRates {
    pub idle_listen_mw: f64,
    pub tx_mj_per_attempt: f64,
    pub rx_mj_per_frame: f64,
    pub sample_mj: f64,
}

impl From<&EnergyConfig> for EnergyRates {
    fn from(c: &EnergyConfig) -> Self {
        Self {
            idle_listen_mw: c.idle_listen_mw,
            tx_mj_per_attempt: c.tx_mj_per_attempt,
            rx_mj_per_frame: c.rx_mj_per_frame,
            sample_mj: c.sample_mj,
        }
    }
}

/// Charges always-on listening for `dt`. Only battery nodes are billed;
/// the radio of a line-powered mote costs nothing that matters here.
pub fn charge_idle_listen(
    account: &mut EnergyAccount,
    rates: &EnergyRates,
    dt: Duration,
    now: SimTime,
) -> bool {
    if account.powered == PowerSource::Line {
        return false;
    }
    account.charge(rates.idle_listen_mw * dt.as_secs_f64(), now)
}
