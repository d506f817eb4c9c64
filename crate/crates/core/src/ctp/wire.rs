//! Frames as they travel between motes.
//!
//! Layout, little-endian, no padding:
//!
//! ```text
//! type:u8  origin:u16  seqno:u16  thl:u8  last_hop:u16  payload
//!   beacon  (0): path_etx centi-ETX u16 (0xFFFF = no route)
//!   data    (1): temperature centi-°C i16, humidity centi-% u16, light u16
//!   command (2): dest u16, temperature centi-°C i16
//! ```
//!
//! In-flight frames already hold the quantized values, so encoding is
//! lossless.

use serde::{Deserialize, Serialize};

use crate::domain::{NodeId, SensorReading, Temperature};
use crate::error::{Error, Result};

pub const HEADER_LEN: usize = 8;
const NO_ROUTE: u16 = u16::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameType {
    Beacon = 0,
    Data = 1,
    Command = 2,
}

impl FrameType {
    pub fn name(self) -> &'static str {
        match self {
            FrameType::Beacon => "beacon",
            FrameType::Data => "data",
            FrameType::Command => "command",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DataPayload {
    pub temp_centi: i16,
    pub humidity_centi: u16,
    pub light: u16,
}

impl DataPayload {
    pub fn from_reading(r: &SensorReading) -> Self {
        Self {
            temp_centi: (r.temperature.0 * 100.0)
                .round()
                .clamp(i16::MIN as f64, i16::MAX as f64) as i16,
            humidity_centi: (r.humidity * 100.0).round().clamp(0.0, 10_000.0) as u16,
            light: r.light.round().clamp(0.0, u16::MAX as f64) as u16,
        }
    }

    pub fn temperature(&self) -> f64 {
        f64::from(self.temp_centi) / 100.0
    }

    pub fn humidity(&self) -> f64 {
        f64::from(self.humidity_centi) / 100.0
    }

    pub fn light(&self) -> f64 {
        f64::from(self.light)
    }
}

/// A setpoint addressed to one controller mote.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CommandPayload {
    pub dest: NodeId,
    temp_centi: i16,
}

impl CommandPayload {
    /// Quantizes `temp` to 0.01 °C. Rejects values outside 18..=30 °C.
    pub fn new(dest: NodeId, temp: Temperature) -> Result<Self> {
        if !temp.is_valid_command() {
            return Err(Error::SetpointOutOfRange(temp.0));
        }
        Ok(Self {
            dest,
            temp_centi: (temp.0 * 100.0).round() as i16,
        })
    }

    pub fn commanded_temp(&self) -> Temperature {
        Temperature(f64::from(self.temp_centi) / 100.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Payload {
    /// Path ETX in hundredths; `None` when the sender has no route.
    Beacon { path_etx_centi: Option<u16> },
    Data(DataPayload),
    Command(CommandPayload),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frame {
    pub origin: NodeId,
    pub seqno: u16,
    /// Forwarding hops taken so far.
    pub thl: u8,
    pub last_hop: NodeId,
    pub payload: Payload,
}

pub fn etx_to_centi(etx: f64) -> Option<u16> {
    if etx.is_finite() {
        Some((etx * 100.0).round().clamp(0.0, f64::from(NO_ROUTE - 1)) as u16)
    } else {
        None
    }
}

pub fn centi_to_etx(c: Option<u16>) -> f64 {
    c.map_or(f64::INFINITY, |c| f64::from(c) / 100.0)
}

impl Frame {
    pub fn frame_type(&self) -> FrameType {
        match self.payload {
            Payload::Beacon { .. } => FrameType::Beacon,
            Payload::Data(_) => FrameType::Data,
            Payload::Command(_) => FrameType::Command,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN + 6);
        b.push(self.frame_type() as u8);
        b.extend_from_slice(&self.origin.0.to_le_bytes());
        b.extend_from_slice(&self.seqno.to_le_bytes());
        b.push(self.thl);
        b.extend_from_slice(&self.last_hop.0.to_le_bytes());
        match self.payload {
            Payload::Beacon { path_etx_centi } => {
                b.extend_from_slice(&path_etx_centi.unwrap_or(NO_ROUTE).to_le_bytes())
            }
            Payload::Data(d) => {
                b.extend_from_slice(&d.temp_centi.to_le_bytes());
                b.extend_from_slice(&d.humidity_centi.to_le_bytes());
                b.extend_from_slice(&d.light.to_le_bytes());
            }
            Payload::Command(c) => {
                b.extend_from_slice(&c.dest.0.to_le_bytes());
                b.extend_from_slice(&c.temp_centi.to_le_bytes());
            }
        }
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        let u16_at = |i: usize| -> Result<u16> {
            bytes
                .get(i..i + 2)
                .map(|s| u16::from_le_bytes([s[0], s[1]]))
                .ok_or_else(|| Error::Malformed(format!("truncated at byte {i}")))
        };
        if bytes.len() < HEADER_LEN {
            return Err(Error::Malformed(format!("{} byte header", bytes.len())));
        }
        let origin = NodeId(u16_at(1)?);
        let seqno = u16_at(3)?;
        let thl = bytes[5];
        let last_hop = NodeId(u16_at(6)?);
        let (payload, len) = match bytes[0] {
            0 => {
                let c = u16_at(8)?;
                (
                    Payload::Beacon {
                        path_etx_centi: (c != NO_ROUTE).then_some(c),
                    },
                    10,
                )
            }
            1 => (
                Payload::Data(DataPayload {
                    temp_centi: u16_at(8)? as i16,
                    humidity_centi: u16_at(10)?,
                    light: u16_at(12)?,
                }),
                14,
            ),
            2 => (
                Payload::Command(CommandPayload {
                    dest: NodeId(u16_at(8)?),
                    temp_centi: u16_at(10)? as i16,
                }),
                12,
            ),
            t => return Err(Error::Malformed(format!("unknown frame type {t}"))),
        };
        if bytes.len() != len {
            return Err(Error::Malformed(format!(
                "{} bytes for a {len}-byte frame",
                bytes.len()
            )));
        }
        Ok(Frame {
            origin,
            seqno,
            thl,
            last_hop,
            payload,
        })
    }
}
