//! Line-delimited JSON traces.
//!
//! Line 1 is a header object (`"type": "header"`) echoing the run
//! configuration, the resolved spawn cells and the shape hash. Every following
//! line is one event:
//!
//! ```text
//! {"tick":12,"robot":3,"kind":"drop","cell":[10,9],"detail":""}
//! ```

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EventKind, SimConfig, TraceEvent};
use crate::grid::Cell;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    #[serde(rename = "type")]
    pub record_type: String,
    pub format_version: u32,
    pub shape_hash: String,
    pub config: SimConfig,
    pub spawns: Vec<Cell>,
}

impl TraceHeader {
    pub fn new(config: SimConfig, shape_hash: String, spawns: Vec<Cell>) -> Self {
        Self {
            record_type: "header".to_string(),
            format_version: FORMAT_VERSION,
            shape_hash,
            config,
            spawns,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    tick: u64,
    robot: u32,
    kind: EventKind,
    cell: Option<[usize; 2]>,
    detail: String,
}

impl From<&TraceEvent> for Record {
    fn from(e: &TraceEvent) -> Self {
        Self {
            tick: e.tick,
            robot: e.robot,
            kind: e.kind,
            cell: e.cell.map(|c| [c.row, c.col]),
            detail: e.detail.clone(),
        }
    }
}

impl From<Record> for TraceEvent {
    fn from(r: Record) -> Self {
        Self {
            tick: r.tick,
            robot: r.robot,
            kind: r.kind,
            cell: r.cell.map(|[row, col]| Cell::new(row, col)),
            detail: r.detail,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("missing header line")]
    MissingHeader,
    #[error("unsupported trace format version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("line {line}: corrupted record ({message}); last valid line is {last_valid}")]
    Corrupt {
        line: usize,
        last_valid: usize,
        message: String,
    },
}

pub fn write_trace<W: Write>(
    header: &TraceHeader,
    events: &[TraceEvent],
    mut sink: W,
) -> io::Result<()> {
    serde_json::to_writer(&mut sink, header)?;
    sink.write_all(b"\n")?;
    for e in events {
        serde_json::to_writer(&mut sink, &Record::from(e))?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

pub fn trace_to_bytes(header: &TraceHeader, events: &[TraceEvent]) -> Vec<u8> {
    let mut out = Vec::new();
    write_trace(header, events, &mut out).expect("writing to memory cannot fail");
    out
}

pub fn read_trace<R: BufRead>(source: R) -> Result<(TraceHeader, Vec<TraceEvent>), TraceError> {
    let mut lines = source.lines();
    let first = lines.next().ok_or(TraceError::MissingHeader)??;
    let version: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| TraceError::Corrupt {
            line: 1,
            last_valid: 0,
            message: e.to_string(),
        })?;
    if version.get("type").and_then(|t| t.as_str()) != Some("header") {
        return Err(TraceError::MissingHeader);
    }
    match version.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(TraceError::Version { found: v as u32 }),
        None => {
            return Err(TraceError::Corrupt {
                line: 1,
                last_valid: 0,
                message: "header lacks format_version".to_string(),
            })
        }
    }
    let header: TraceHeader = serde_json::from_value(version).map_err(|e| TraceError::Corrupt {
        line: 1,
        last_valid: 0,
        message: e.to_string(),
    })?;

    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let record: Record = serde_json::from_str(&line).map_err(|e| TraceError::Corrupt {
            line: line_no,
            last_valid: line_no - 1,
            message: e.to_string(),
        })?;
        events.push(record.into());
    }
    Ok((header, events))
}
