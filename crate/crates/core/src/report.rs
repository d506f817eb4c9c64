//! Per-node day/night statistics of a finished run.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::basestation::ReadingRecord;
use crate::domain::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDayNight {
    pub node: u16,
    pub day_mean: Option<f64>,
    pub night_mean: Option<f64>,
    pub day_count: u64,
    pub night_count: u64,
}

/// Hour of day of an exported timestamp.
fn hour_of_day(timestamp: u64) -> u64 {
    (timestamp % SimTime::MS_PER_DAY) / SimTime::MS_PER_HOUR
}

/// Means of all readings per node, split by whether the reading's hour of
/// day falls in `[day_start_h, day_end_h)`.
pub fn day_night_means<'a, I>(records: I, day_start_h: u64, day_end_h: u64) -> Vec<NodeDayNight>
where
    I: IntoIterator<Item = &'a ReadingRecord>,
{
    // (day sum, day n, night sum, night n)
    let mut acc: BTreeMap<u16, (f64, u64, f64, u64)> = BTreeMap::new();
    for r in records {
        let a = acc.entry(r.id).or_default();
        let h = hour_of_day(r.timestamp);
        if (day_start_h..day_end_h).contains(&h) {
            a.0 += r.temperature;
            a.1 += 1;
        } else {
            a.2 += r.temperature;
            a.3 += 1;
        }
    }
    acc.into_iter()
        .map(|(node, (ds, dn, ns, nn))| NodeDayNight {
            node,
            day_mean: (dn > 0).then(|| ds / dn as f64),
            night_mean: (nn > 0).then(|| ns / nn as f64),
            day_count: dn,
            night_count: nn,
        })
        .collect()
}

/// The table printed by `senvm report`.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub rows: Vec<NodeDayNight>,
    pub delivery_ratio: Option<f64>,
    pub commands_issued: u64,
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6} {:>14} {:>16}", "Node", "Day Avg (°C)", "Night Avg (°C)")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<6} {:>14} {:>16}",
                format!("N{}", r.node),
                cell(r.day_mean),
                cell(r.night_mean)
            )?;
        }
        writeln!(f)?;
        match self.delivery_ratio {
            Some(d) => writeln!(f, "delivery ratio: {d:.3}")?,
            None => writeln!(f, "delivery ratio: -")?,
        }
        writeln!(f, "commands issued: {}", self.commands_issued)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::NodeId;

    fn rec(id: u16, ts: u64, t: f64) -> ReadingRecord {
        ReadingRecord::new(NodeId(id), ts, t, 50.0, 0.0)
    }

    #[test]
    fn splits_at_window_edges() {
        let h = SimTime::MS_PER_HOUR;
        let rows = [
            rec(9, 8 * h - 1, 10.0),
            rec(9, 8 * h, 20.0),
            rec(9, 20 * h - 1, 22.0),
            rec(9, 20 * h, 30.0),
            rec(9, SimTime::MS_PER_DAY + 9 * h, 24.0),
        ];
        let out = day_night_means(&rows, 8, 20);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].day_mean, Some(22.0));
        assert_eq!(out[0].night_mean, Some(20.0));
        assert_eq!((out[0].day_count, out[0].night_count), (3, 2));
    }

    #[test]
    fn renders_dashes_for_missing_halves() {
        let r = Report {
            rows: day_night_means(&[rec(10, 0, 27.0)], 8, 20),
            delivery_ratio: Some(1.0),
            commands_issued: 0,
        };
        let text = r.to_string();
        assert!(text.contains("N10"));
        assert!(text.contains("27.00"));
        assert!(text.contains("delivery ratio: 1.000"));
    }
}
