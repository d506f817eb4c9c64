use std::collections::BTreeMap;

use serde::Serialize;

use super::estimator::{EstimatorParams, LinkEstimate};
use crate::domain::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub estimate: LinkEstimate,
    /// Path ETX last advertised by this neighbor.
    pub path_etx: f64,
}

impl Candidate {
    pub fn total(&self) -> f64 {
        self.estimate.etx() + self.path_etx
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchRule {
    pub broken_link_prr: f64,
    pub hysteresis_etx: f64,
}

impl Default for SwitchRule {
    fn default() -> Self {
        Self {
            broken_link_prr: 0.25,
            hysteresis_etx: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParentChange {
    pub from: Option<NodeId>,
    pub to: Option<NodeId>,
    pub path_etx: f64,
}

/// Neighbors heard from and the one currently used as parent.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ParentTable {
    current: Option<NodeId>,
    candidates: BTreeMap<NodeId, Candidate>,
}

impl ParentTable {
    pub fn current(&self) -> Option<NodeId> {
        self.current
    }

    pub fn candidates(&self) -> &BTreeMap<NodeId, Candidate> {
        &self.candidates
    }

    pub fn candidate(&self, n: NodeId) -> Option<&Candidate> {
        self.candidates.get(&n)
    }

    pub fn estimate_mut(&mut self, n: NodeId) -> &mut LinkEstimate {
        &mut self
            .candidates
            .entry(n)
            .or_insert_with(|| Candidate {
                estimate: LinkEstimate::new(n),
                path_etx: f64::INFINITY,
            })
            .estimate
    }

    pub fn record_beacon(&mut self, from: NodeId, seq: u16, path_etx: f64, p: &EstimatorParams) {
        let est = self.estimate_mut(from);
        est.on_beacon(seq, p);
        self.candidates.get_mut(&from).expect("inserted").path_etx = path_etx;
    }

    /// Total ETX through the current parent, or infinity without one.
    pub fn path_etx(&self) -> f64 {
        self.current
            .and_then(|c| self.candidates.get(&c))
            .map_or(f64::INFINITY, Candidate::total)
    }

    /// Lowest-total candidate. A neighbor advertising a path at least as
    /// long as ours could be routing through us, so it is skipped while we
    /// have a finite path. Ties go to the lowest id.
    pub fn choose_parent(&self) -> Option<NodeId> {
        let own = self.path_etx();
        let mut best: Option<(NodeId, f64)> = None;
        for (&n, c) in &self.candidates {
            if own.is_finite() && c.path_etx >= own {
                continue;
            }
            let t = c.total();
            if !t.is_finite() {
                continue;
            }
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((n, t));
            }
        }
        best.map(|(n, _)| n)
    }

    /// Re-evaluates the parent. Returns the change, if any.
    pub fn maybe_switch(&mut self, rule: &SwitchRule) -> Option<ParentChange> {
        let best = self.choose_parent();
        let next = match self.current {
            None => best,
            Some(cur) => {
                let c = &self.candidates[&cur];
                let cur_total = c.total();
                match best {
                    Some(b) if b != cur => {
                        let broken = c.estimate.beacon_prr_in < rule.broken_link_prr;
                        let better =
                            self.candidates[&b].total() + rule.hysteresis_etx < cur_total;
                        if broken || better {
                            Some(b)
                        } else {
                            Some(cur)
                        }
                    }
                    Some(_) => Some(cur),
                    None if cur_total.is_finite() => Some(cur),
                    None => None,
                }
            }
        };
        if next == self.current {
            return None;
        }
        let from = self.current;
        self.current = next;
        Some(ParentChange {
            from,
            to: next,
            path_etx: self.path_etx(),
        })
    }
}
