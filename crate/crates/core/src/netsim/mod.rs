//! Discrete-event engine, radio channel model and energy accounting.

pub mod energy;
pub mod engine;
pub mod radio;
pub mod rng;
pub mod trace;

pub use energy::{charge_idle_listen, EnergyAccount, EnergyRates};
pub use engine::{Engine, Event, Target};
pub use radio::{
    channel_center_mhz, effective_prr, overlaps, transmit, ChannelConfig, Interferer, LinkModel,
    Radio, Standard,
};
pub use rng::{Purpose, Streams};
pub use trace::{TraceDetail, TraceRecord, TraceWriter};
