//! Deterministic simulation of a wireless temperature-monitoring and
//! air-conditioner control system for a small server room.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`]: ids, time, readings and scenario validation
//! * [`netsim`]: event engine, radio channel model, energy accounting
//! * [`ctp`]: per-node collection-tree routing
//! * [`plant`]: lumped thermal model of the room
//! * [`basestation`]: reading store, dead-node detection, setpoint controller
//! * [`sim`]: the world that wires all of the above to a scenario
//! * [`report`]: summaries of a finished run

pub mod basestation;
pub mod ctp;
pub mod domain;
pub mod error;
pub mod netsim;
pub mod plant;
pub mod report;
pub mod scenario;
pub mod sim;

pub use domain::{NodeId, NodeRole, PowerSource, SensorReading, SimTime, Temperature};
pub use error::{Error, Result};
pub use scenario::ScenarioConfig;
pub use sim::{RunOutputs, World};
