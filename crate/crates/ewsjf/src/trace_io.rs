//! JSONL request traces: one `{"id", "prompt_len", "output_len", "arrival_time"}`
//! object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ewsjf_core::workload::{Request, RequestTrace};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record<'a> {
    id: std::borrow::Cow<'a, str>,
    prompt_len: u32,
    output_len: u32,
    arrival_time: f64,
}

/// A loaded trace and the number of out-of-order pairs that were sorted away.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTrace {
    pub trace: RequestTrace,
    pub inversions: u64,
}

pub fn load_trace(path: &Path) -> Result<LoadedTrace> {
    let file = File::open(path).map_err(io_at(path))?;
    read_trace(BufReader::new(file), path)
}

/// Parses JSONL from `reader`; `path` only labels errors. Blank lines are
/// skipped.
pub fn read_trace(reader: impl BufRead, path: &Path) -> Result<LoadedTrace> {
    let mut requests = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_at(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| Error::Line { path: path.to_path_buf(), line: i + 1, message };
        let rec: Record = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        let request = Request::new(rec.id, rec.prompt_len, rec.output_len, rec.arrival_time)
            .map_err(|e| at(e.to_string()))?;
        requests.push(request);
    }
    let (trace, inversions) = RequestTrace::from_unsorted(requests)?;
    Ok(LoadedTrace { trace, inversions })
}

pub fn write_trace(trace: &RequestTrace, mut out: impl Write) -> std::io::Result<()> {
    for r in trace.requests() {
        let rec = Record {
            id: r.id.as_str().into(),
            prompt_len: r.prompt_len,
            output_len: r.output_len,
            arrival_time: r.arrival_time,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_trace(trace: &RequestTrace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_at(path))?;
    write_trace(trace, BufWriter::new(file)).map_err(io_at(path))
}
