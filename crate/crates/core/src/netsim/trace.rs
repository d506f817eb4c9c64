//! Line-delimited JSON event trace.
//!
//! Each record is `{"t":..,"seq":..,"kind":..,"node":..,"detail":{..}}` in
//! exactly that field order, so identical runs produce identical bytes.

use std::io::{self, Write};

use serde::Serialize;

use crate::scenario::TraceLevel;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: u64,
    pub seq: u64,
    pub kind: &'static str,
    pub node: Option<u16>,
    pub detail: TraceDetail,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TraceDetail {
    None {},
    Beacon {
        path_etx: f64,
        parent: Option<u16>,
        heard_by: Vec<u16>,
    },
    Sample {
        seqno: u16,
        queued: bool,
    },
    Tx {
        frame: &'static str,
        origin: u16,
        seqno: u16,
        to: u16,
        attempts: u32,
        ok: bool,
    },
    Frame {
        origin: u16,
        seqno: u16,
        thl: u8,
        outcome: &'static str,
    },
    Parent {
        from: Option<u16>,
        to: Option<u16>,
        path_etx: f64,
    },
    Command {
        ac: String,
        dest: u16,
        value: f64,
    },
    Text {
        info: String,
    },
}

impl TraceRecord {
    /// Records dropped at [`TraceLevel::Routing`].
    pub fn is_housekeeping(&self) -> bool {
        matches!(
            self.kind,
            "tick" | "beacon" | "sample" | "control_tick" | "tx" | "deliver"
        )
    }
}

/// Serializes records at the configured level into any writer.
pub struct TraceWriter {
    out: Option<Box<dyn Write + Send>>,
    level: TraceLevel,
    written: u64,
}

impl TraceWriter {
    pub fn new(out: Box<dyn Write + Send>, level: TraceLevel) -> Self {
        Self {
            out: Some(out),
            level,
            written: 0,
        }
    }

    pub fn disabled() -> Self {
        Self {
            out: None,
            level: TraceLevel::Off,
            written: 0,
        }
    }

    pub fn enabled(&self) -> bool {
        self.out.is_some() && self.level != TraceLevel::Off
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn record(&mut self, rec: &TraceRecord) -> io::Result<()> {
        let Some(out) = self.out.as_mut() else {
            return Ok(());
        };
        match self.level {
            TraceLevel::Off => return Ok(()),
            TraceLevel::Routing if rec.is_housekeeping() => return Ok(()),
            _ => {}
        }
        serde_json::to_writer(&mut *out, rec)?;
        out.write_all(b"\n")?;
        self.written += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.out.as_mut() {
            Some(o) => o.flush(),
            None => Ok(()),
        }
    }
}
