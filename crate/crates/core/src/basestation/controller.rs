//! Per-unit setpoint controller.
//!
//! Inputs are the error `e = T_meas - target` and its change since the
//! last cycle. With crisp inputs the rule table reduces to:
//!
//! | condition                                    | command                 |
//! |----------------------------------------------|-------------------------|
//! | `|e| <= band`                                | move `relax` toward target, stop there |
//! | `e > band`, first cycle or `d <= -trend`     | `target - e`            |
//! | `e > band`, otherwise                        | `last - step`           |
//! | `e < -band`, first cycle or `d >= trend`     | `target - e`            |
//! | `e < -band`, otherwise                       | `last + step`           |
//!
//! Commands are clamped to 18..=30 °C and rounded to 0.01 °C, the
//! resolution of the command frame.

use serde::Serialize;

use crate::domain::{NodeId, SimTime, Temperature};
use crate::error::{Error, Result};
use crate::scenario::ControllerConfig;

pub const TARGET_BAND: (f64, f64) = (20.0, 28.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlParams {
    pub band: f64,
    pub trend: f64,
    pub step: f64,
    pub relax: f64,
    pub fail_safe: Temperature,
}

impl From<&ControllerConfig> for ControlParams {
    fn from(c: &ControllerConfig) -> Self {
        Self {
            band: c.band_c,
            trend: c.trend_c,
            step: c.step_c,
            relax: c.relax_c,
            fail_safe: Temperature(c.fail_safe_c),
        }
    }
}

impl Default for ControlParams {
    fn default() -> Self {
        Self::from(&ControllerConfig::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Relax,
    Correct,
    Escalate,
    FailSafe,
}

pub fn quantize(t: f64) -> Temperature {
    Temperature((t * 100.0).round() / 100.0)
}

/// One evaluation of the rule table.
pub fn next_command(
    p: &ControlParams,
    target: f64,
    last: f64,
    prev_error: Option<f64>,
    e: f64,
) -> (Temperature, Rule) {
    let d = prev_error.map_or(0.0, |pe| e - pe);
    let (raw, rule) = if e.abs() <= p.band {
        let moved = if last < target {
            (last + p.relax).min(target)
        } else {
            (last - p.relax).max(target)
        };
        (moved, Rule::Relax)
    } else if e > 0.0 {
        if prev_error.is_none() || d <= -p.trend {
            (target - e, Rule::Correct)
        } else {
            (last - p.step, Rule::Escalate)
        }
    } else if prev_error.is_none() || d >= p.trend {
        (target - e, Rule::Correct)
    } else {
        (last + p.step, Rule::Escalate)
    };
    (quantize(Temperature(raw).clamp_command().0), rule)
}

/// What one control cycle decided for a unit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decision {
    pub ac: String,
    pub controller: NodeId,
    pub measured: Option<f64>,
    pub error: Option<f64>,
    pub rule: Option<Rule>,
    /// Present when a command must be sent this cycle.
    pub command: Option<Temperature>,
    /// The unit just entered fail-safe.
    pub alert: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitController {
    pub ac: String,
    pub controller: NodeId,
    pub sensors: Vec<NodeId>,
    pub target: Temperature,
    pub last_command: Temperature,
    pub prev_error: Option<f64>,
    pub last_control_time: Option<SimTime>,
    /// False after a command that never reached the unit; forces a resend.
    pub delivered: bool,
    pub fail_safe: bool,
}

impl UnitController {
    pub fn new(
        ac: impl Into<String>,
        controller: NodeId,
        sensors: Vec<NodeId>,
        target: Temperature,
        initial_setpoint: Temperature,
    ) -> Self {
        Self {
            ac: ac.into(),
            controller,
            sensors,
            target,
            last_command: initial_setpoint,
            prev_error: None,
            last_control_time: None,
            delivered: true,
            fail_safe: false,
        }
    }

    pub fn set_target(&mut self, value: Temperature) -> Result<()> {
        if !(TARGET_BAND.0..=TARGET_BAND.1).contains(&value.0) {
            return Err(Error::TargetOutOfBand(value.0));
        }
        self.target = value;
        self.prev_error = None;
        Ok(())
    }

    /// Runs one cycle. `measured` is the controlled temperature, or `None`
    /// when no assigned sensor has reported yet; `all_dead` means every
    /// assigned sensor is dead.
    pub fn step(&mut self, p: &ControlParams, now: SimTime, measured: Option<f64>, all_dead: bool) -> Decision {
        self.last_control_time = Some(now);
        let mut d = Decision {
            ac: self.ac.clone(),
            controller: self.controller,
            measured,
            error: None,
            rule: None,
            command: None,
            alert: false,
        };
        let (cmd, rule) = if all_dead {
            d.alert = !self.fail_safe;
            self.fail_safe = true;
            self.prev_error = None;
            (p.fail_safe, Rule::FailSafe)
        } else if let Some(m) = measured {
            self.fail_safe = false;
            let e = m - self.target.0;
            let out = next_command(p, self.target.0, self.last_command.0, self.prev_error, e);
            self.prev_error = Some(e);
            d.error = Some(e);
            out
        } else {
            return d;
        };
        d.rule = Some(rule);
        if cmd != self.last_command || !self.delivered {
            self.last_command = cmd;
            self.delivered = true;
            d.command = Some(cmd);
        }
        d
    }

    pub fn delivery_failed(&mut self) {
        self.delivered = false;
    }
}
