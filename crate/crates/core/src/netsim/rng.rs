//! Seeded random streams.
//!
//! Every draw in a run comes from a ChaCha8 generator keyed by the run
//! seed. Each (node, purpose) pair reads its own stream, selected with
//! `set_stream(node_id * 4 + purpose)`, so adding or removing a node never
//! shifts another node's draws.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Purpose {
    /// Link-layer reception trials for frames this node sends.
    Radio = 0,
    /// Measurement noise.
    Sensor = 1,
    /// Timer jitter and start phases.
    Timer = 2,
}

pub fn stream(seed: u64, node: NodeId, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(node.0) * 4 + purpose as u64);
    rng
}

/// Lazily created per-(node, purpose) generators for one run.
#[derive(Clone, Debug)]
pub struct Streams {
    seed: u64,
    streams: BTreeMap<(NodeId, Purpose), ChaCha8Rng>,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&mut self, node: NodeId, purpose: Purpose) -> &mut ChaCha8Rng {
        let seed = self.seed;
        self.streams
            .entry((node, purpose))
            .or_insert_with(|| stream(seed, node, purpose))
    }
}
