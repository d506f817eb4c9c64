//! Readings table with timestamps quantized to minute, hour and day.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{NodeId, SimTime};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "id,timestamp,minute,hour,day,temperature,humidity,intensity";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadingRecord {
    pub id: u16,
    /// Milliseconds.
    pub timestamp: u64,
    pub minute: u64,
    pub hour: u64,
    pub day: u64,
    pub temperature: f64,
    pub humidity: f64,
    pub intensity: f64,
}

impl ReadingRecord {
    pub fn new(id: NodeId, timestamp: u64, temperature: f64, humidity: f64, intensity: f64) -> Self {
        Self {
            id: id.0,
            timestamp,
            minute: timestamp / SimTime::MS_PER_MINUTE,
            hour: timestamp / SimTime::MS_PER_HOUR,
            day: timestamp / SimTime::MS_PER_DAY,
            temperature,
            humidity,
            intensity,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.2},{:.2},{:.0}",
            self.id,
            self.timestamp,
            self.minute,
            self.hour,
            self.day,
            self.temperature,
            self.humidity,
            self.intensity
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 8 {
            return Err(Error::Malformed(format!("expected 8 fields: {line}")));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Malformed(format!("{s}: {e}")));
        let real = |s: &str| s.parse::<f64>().map_err(|e| Error::Malformed(format!("{s}: {e}")));
        let id = u16::try_from(int(f[0])?).map_err(|e| Error::Malformed(e.to_string()))?;
        Ok(Self {
            id,
            timestamp: int(f[1])?,
            minute: int(f[2])?,
            hour: int(f[3])?,
            day: int(f[4])?,
            temperature: real(f[5])?,
            humidity: real(f[6])?,
            intensity: real(f[7])?,
        })
    }

    pub fn bucket(&self, g: Granularity) -> u64 {
        match g {
            Granularity::Raw => self.timestamp,
            Granularity::Minute => self.minute,
            Granularity::Hour => self.hour,
            Granularity::Day => self.day,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Raw,
    Minute,
    Hour,
    Day,
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Granularity::Raw),
            "minute" => Ok(Granularity::Minute),
            "hour" => Ok(Granularity::Hour),
            "day" => Ok(Granularity::Day),
            _ => Err(Error::Config(format!("unknown granularity: {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bucket {
    pub bucket: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Series {
    Raw(Vec<ReadingRecord>),
    Buckets(Vec<Bucket>),
}

impl Series {
    pub fn len(&self) -> usize {
        match self {
            Series::Raw(r) => r.len(),
            Series::Buckets(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Groups records into buckets of `g`, in ascending bucket order.
pub fn aggregate<'a, I>(records: I, g: Granularity) -> Vec<Bucket>
where
    I: IntoIterator<Item = &'a ReadingRecord>,
{
    let mut acc: BTreeMap<u64, (f64, f64, f64, u64)> = BTreeMap::new();
    for r in records {
        let e = acc
            .entry(r.bucket(g))
            .or_insert((0.0, f64::INFINITY, f64::NEG_INFINITY, 0));
        e.0 += r.temperature;
        e.1 = e.1.min(r.temperature);
        e.2 = e.2.max(r.temperature);
        e.3 += 1;
    }
    acc.into_iter()
        .map(|(bucket, (sum, min, max, count))| Bucket {
            bucket,
            mean: sum / count as f64,
            min,
            max,
            count,
        })
        .collect()
}

/// Append-only readings table. Rows are kept in arrival order; each node
/// has an index of its rows, sorted by timestamp, which serves the
/// minute/hour/day lookups.
#[derive(Clone, Debug, Default)]
pub struct ReadingStore {
    rows: Vec<ReadingRecord>,
    by_node: BTreeMap<u16, Vec<u32>>,
    duplicates: u64,
    skipped: u64,
}

impl ReadingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[ReadingRecord] {
        &self.rows
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.by_node.keys().map(|&id| NodeId(id))
    }

    /// Counts a payload that could not be turned into a record.
    pub fn skip_malformed(&mut self) {
        self.skipped += 1;
    }

    /// Appends `r`. Returns `false` and stores nothing when a record with
    /// the same (id, timestamp) already exists.
    pub fn insert(&mut self, r: ReadingRecord) -> bool {
        let idx = self.by_node.entry(r.id).or_default();
        let rows = &self.rows;
        let pos = idx.partition_point(|&i| rows[i as usize].timestamp <= r.timestamp);
        if pos > 0 && rows[idx[pos - 1] as usize].timestamp == r.timestamp {
            self.duplicates += 1;
            return false;
        }
        idx.insert(pos, self.rows.len() as u32);
        self.rows.push(r);
        true
    }

    /// Records of `node` with `from <= timestamp < to`, by timestamp.
    pub fn range(&self, node: NodeId, from: u64, to: u64) -> impl Iterator<Item = &ReadingRecord> {
        let idx: &[u32] = self.by_node.get(&node.0).map_or(&[], Vec::as_slice);
        let lo = idx.partition_point(|&i| self.rows[i as usize].timestamp < from);
        let hi = idx.partition_point(|&i| self.rows[i as usize].timestamp < to);
        idx[lo..hi.max(lo)].iter().map(|&i| &self.rows[i as usize])
    }

    pub fn query(&self, node: NodeId, from: u64, to: u64, g: Granularity) -> Series {
        match g {
            Granularity::Raw => Series::Raw(self.range(node, from, to).copied().collect()),
            _ => Series::Buckets(aggregate(self.range(node, from, to), g)),
        }
    }

    pub fn latest(&self, node: NodeId) -> Option<&ReadingRecord> {
        self.by_node
            .get(&node.0)
            .and_then(|idx| idx.last())
            .map(|&i| &self.rows[i as usize])
    }

    /// Mean of the most recent minute bucket before `before_minute` that
    /// holds any of `node`'s readings.
    pub fn latest_minute_mean(&self, node: NodeId, before_minute: u64) -> Option<Bucket> {
        let idx = self.by_node.get(&node.0)?;
        let end = idx.partition_point(|&i| self.rows[i as usize].minute < before_minute);
        let last = &self.rows[*idx[..end].last()? as usize];
        let start = idx[..end].partition_point(|&i| self.rows[i as usize].minute < last.minute);
        aggregate(idx[start..end].iter().map(|&i| &self.rows[i as usize]), Granularity::Minute)
            .pop()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{}", r.csv_line())?;
        }
        w.flush()
    }
}

/// Parses an exported readings file.
pub fn read_csv(text: &str) -> Result<Vec<ReadingRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Malformed(format!(
                "bad readings header: {:?}",
                other.unwrap_or("")
            )))
        }
    }
    lines
        .filter(|l| !l.is_empty())
        .map(ReadingRecord::parse_csv_line)
        .collect()
}
