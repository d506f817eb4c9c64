use thiserror::Error;

use crate::domain::{NodeId, SimTime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("event scheduled at {at} but simulation is already at {now}")]
    ScheduledInPast { at: SimTime, now: SimTime },
    #[error("invalid {standard} channel {channel}")]
    InvalidChannel { standard: &'static str, channel: i32 },
    #[error("explicit step of {dt_s} s is unstable for zone {zone} (limit {limit_s:.1} s)")]
    UnstableStep { zone: String, dt_s: f64, limit_s: f64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown air conditioner {0}")]
    UnknownAc(String),
    #[error("setpoint {0} °C outside the accepted range")]
    SetpointOutOfRange(f64),
    #[error("target {0} °C outside the operator band 20..=28 °C")]
    TargetOutOfBand(f64),
    #[error("no route to controller {0}")]
    NoRoute(NodeId),
    #[error("malformed frame: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
