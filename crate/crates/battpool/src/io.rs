//! File formats: chain-spec JSON, trace CSV, occupancy CSV.
//!
//! Every write goes through [`write_atomic`], which writes a temporary file
//! in the destination directory and renames it into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use battpool_core::chain::RawChain;
use battpool_core::trace::{TraceSeries, Unit};
use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};

use crate::error::{CliError, Result};

pub const TRACE_HEADER: [&str; 2] = ["timestamp", "power_mw"];

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_chain(path: &Path) -> Result<RawChain> {
    let text = read_to_string(path)?;
    parse_chain(&text, path)
}

pub fn parse_chain(text: &str, path: &Path) -> Result<RawChain> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: format!("column {}: {e}", e.column()),
    })
}

pub fn chain_json(chain: &RawChain) -> String {
    let mut s = serde_json::to_string_pretty(chain).expect("chains serialise");
    s.push('\n');
    s
}

/// Accepts RFC 3339 timestamps with any offset, or naive ones
/// (`2010-01-01T00:05:00`, `2010-01-01 00:05:00`) read as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(t: i64) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceOptions {
    pub cadence_secs: u32,
    /// Fill missing samples with the previous value instead of failing.
    pub forward_fill: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            cadence_secs: battpool_core::trace::DEFAULT_CADENCE_SECS,
            forward_fill: false,
        }
    }
}

/// Loads a `timestamp,power_mw` CSV. The location id is the file stem.
pub fn load_trace(path: &Path, opts: TraceOptions) -> Result<TraceSeries> {
    let text = read_to_string(path)?;
    let location = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    parse_trace(&text, path, &location, opts)
}

pub fn parse_trace(
    text: &str,
    path: &Path,
    location: &str,
    opts: TraceOptions,
) -> Result<TraceSeries> {
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let cadence_err = |line: u64, message: String| CliError::Cadence {
        path: path.to_path_buf(),
        line,
        message,
    };
    if opts.cadence_secs == 0 {
        return Err(CliError::Usage("--cadence-seconds must be positive".into()));
    }
    let cadence = opts.cadence_secs as i64;

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.iter().ne(TRACE_HEADER) {
        return Err(parse_err(
            1,
            format!(
                "expected header `timestamp,power_mw`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut start = None;
    let mut last: Option<i64> = None;
    let mut values: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(parse_err(
                line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let t = parse_timestamp(&record[0]).ok_or_else(|| {
            parse_err(
                line,
                format!("`{}` is not an ISO-8601 timestamp", &record[0]),
            )
        })?;
        let v: f64 = record[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(line, format!("`{}` is not a finite number", &record[1])))?;
        if let Some(prev) = last {
            let dt = t - prev;
            if dt == 0 {
                return Err(parse_err(
                    line,
                    format!("duplicate timestamp {}", &record[0]),
                ));
            }
            if dt < 0 {
                return Err(parse_err(line, "timestamps are not increasing".into()));
            }
            if dt % cadence != 0 {
                return Err(cadence_err(
                    line,
                    format!("{dt} s after the previous row; declared cadence is {cadence} s"),
                ));
            }
            let missing = dt / cadence - 1;
            if missing > 0 {
                if !opts.forward_fill {
                    return Err(cadence_err(
                        line,
                        format!(
                            "{dt} s after the previous row ({missing} missing samples at {cadence} s cadence); \
                             pass --forward-fill to fill gaps"
                        ),
                    ));
                }
                let fill = *values.last().expect("a previous row exists");
                values.extend(std::iter::repeat_n(fill, missing as usize));
            }
        } else {
            start = Some(t);
        }
        last = Some(t);
        values.push(v);
    }
    let start = start.ok_or_else(|| parse_err(1, "no samples".into()))?;
    Ok(TraceSeries::new(
        location,
        start,
        opts.cadence_secs,
        values,
        Unit::PowerMw,
    )?)
}

/// Writes a power trace in the format [`load_trace`] reads.
pub fn trace_csv(trace: &TraceSeries) -> Result<String> {
    let power = trace.to_power()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    for (k, v) in power.values().iter().enumerate() {
        w.write_record([format_timestamp(power.timestamp(k)), v.to_string()])
            .expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"))
}

/// `step,timestamp,occupancy,loss_flag`. Row `k` holds `b(k)` and whether
/// step `k` (from `b(k)` to `b(k+1)`) lost load; the final row has no step.
pub fn occupancy_csv(occupancy: &TraceSeries, losses: &[bool]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "timestamp", "occupancy", "loss_flag"])
        .expect("in-memory write");
    for (k, b) in occupancy.values().iter().enumerate() {
        let flag = match losses.get(k) {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        w.write_record([
            k.to_string(),
            format_timestamp(occupancy.timestamp(k)),
            b.to_string(),
            flag.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
