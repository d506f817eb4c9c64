//! Hybrid link estimator.
//!
//! Inbound quality comes from beacon sequence gaps, outbound quality from
//! link-layer acknowledgements of data attempts. Both are folded into an
//! EWMA once per window: `q = alpha * q + (1 - alpha) * window_ratio`.
//! Until the first beacon window closes, the inbound ratio is the running
//! ratio of the partial window; the outbound ratio starts optimistic at 1.

use serde::Serialize;

use crate::domain::NodeId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorParams {
    pub alpha: f64,
    pub window: u32,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            window: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkEstimate {
    pub neighbor: NodeId,
    pub beacon_prr_in: f64,
    pub data_ack_prr: f64,
    #[serde(skip)]
    beacon: Window,
    #[serde(skip)]
    data: Window,
    #[serde(skip)]
    last_beacon_seq: Option<u16>,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Window {
    hits: u32,
    misses: u32,
    closed_once: bool,
}

impl Window {
    fn total(&self) -> u32 {
        self.hits + self.misses
    }

    fn ratio(&self) -> f64 {
        self.hits as f64 / self.total() as f64
    }

    /// Returns the window ratio and resets when the window is full.
    fn close_if_full(&mut self, size: u32) -> Option<f64> {
        if self.total() < size {
            return None;
        }
        let r = self.ratio();
        self.hits = 0;
        self.misses = 0;
        Some(r)
    }
}

fn fold(prev: f64, sample: f64, first: bool, alpha: f64) -> f64 {
    if first {
        sample
    } else {
        alpha * prev + (1.0 - alpha) * sample
    }
}

impl LinkEstimate {
    pub fn new(neighbor: NodeId) -> Self {
        Self {
            neighbor,
            beacon_prr_in: 0.0,
            data_ack_prr: 1.0,
            beacon: Window::default(),
            data: Window::default(),
            last_beacon_seq: None,
        }
    }

    /// Accounts for a received beacon carrying sequence number `seq`.
    pub fn on_beacon(&mut self, seq: u16, p: &EstimatorParams) {
        let missed = match self.last_beacon_seq {
            Some(last) => u32::from(seq.wrapping_sub(last).wrapping_sub(1)),
            None => 0,
        };
        self.last_beacon_seq = Some(seq);
        self.beacon.hits += 1;
        self.beacon.misses += missed;
        let first = !self.beacon.closed_once;
        if let Some(r) = self.beacon.close_if_full(p.window) {
            self.beacon_prr_in = fold(self.beacon_prr_in, r, first, p.alpha);
            self.beacon.closed_once = true;
        } else if first {
            self.beacon_prr_in = self.beacon.ratio();
        }
    }

    /// Accounts for one link-layer data attempt to this neighbor.
    pub fn on_data_attempt(&mut self, acked: bool, p: &EstimatorParams) {
        if acked {
            self.data.hits += 1;
        } else {
            self.data.misses += 1;
        }
        let first = !self.data.closed_once;
        if let Some(r) = self.data.close_if_full(p.window) {
            self.data_ack_prr = fold(self.data_ack_prr, r, first, p.alpha);
            self.data.closed_once = true;
        }
    }

    /// Expected transmissions per delivered frame; at least 1, infinite for
    /// a link never heard or never acknowledged.
    pub fn etx(&self) -> f64 {
        let q = self.beacon_prr_in * self.data_ack_prr;
        if q > 0.0 {
            (1.0 / q).max(1.0)
        } else {
            f64::INFINITY
        }
    }
}
