//! Collection-tree routing: beacons carry path ETX toward the sink, every
//! node keeps one parent, data flows up the tree and commands flow back
//! down along the paths data arrived on.

pub mod estimator;
pub mod node;
pub mod routing;
pub mod wire;

pub use estimator::{EstimatorParams, LinkEstimate};
pub use node::{CtpNode, CtpParams, DropReason, Received, TxReport};
pub use routing::{Candidate, ParentChange, ParentTable, SwitchRule};
pub use wire::{CommandPayload, DataPayload, Frame, FrameType, Payload};
