//! Shared file formats and the bundled reference datasets.
//!
//! All persisted times are integer nanoseconds, lengths are bytes;
//! conversion to the internal seconds/bits happens here. Files are UTF-8
//! CSV with LF line endings; lines starting with `#` are comments.
//!
//! Formats:
//!
//! - packet trace: `packet_id,length_bytes,arrival_ns,departure_ns`
//! - arrivals (a trace without departures): `packet_id,length_bytes,arrival_ns`
//! - IO delay table: `length_bytes,load_fraction,io_delay_us`
//! - curve breakpoints: `t_seconds,value_bits,slope_bps`
//! - configs: `key = value` lines, keys unit-suffixed
//!   (`_bps`, `_bits`, `_bytes`, `_s`, `_us`)
//!
//! The reference datasets under `data/` ship inside the binary and are
//! verified against FNV-1a checksums at load.

use crate::estimator::{EstimationError, IoDelayEntry, IoDelayTable, MeasuredTrace, PacketRecord};
use crate::minplus::Curve;
use crate::models::{
    FourTupleFlow, FlowSpec, ModelError, PeriodicStaircaseFlow, RateLatencyServer, RealSourceFlow,
    TokenBucketFlow,
};
use crate::simulator::{Arrival, SweepRow};
use crate::{ns_to_s, s_to_ns};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {rule}")]
    Rule { line: usize, rule: String },
    #[error("missing config key `{key}` (accepted suffixes: {accepted})")]
    MissingKey { key: String, accepted: String },
    #[error("config key `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("reference dataset `{name}` is corrupt: checksum {actual:#x}, expected {expected:#x}")]
    Checksum {
        name: String,
        expected: u64,
        actual: u64,
    },
    #[error("packet {id}: length {bits} bits is not a whole number of bytes")]
    NonByteLength { id: u64, bits: u64 },
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

// ---------------------------------------------------------------------------
// CSV line scanning
// ---------------------------------------------------------------------------

/// Yield `(line_number, content)` for data lines, skipping comments and
/// blanks.
fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String), IoError>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        match line {
            Err(e) => Some(Err(IoError::Io(e))),
            Ok(l) => {
                let trimmed = l.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    None
                } else {
                    Some(Ok((line_no, trimmed.to_string())))
                }
            }
        }
    })
}

fn split_fields(line: &str, expect: usize, line_no: usize) -> Result<Vec<&str>, IoError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != expect {
        return Err(IoError::Parse {
            line: line_no,
            message: format!("expected {expect} comma-separated fields, got {}", fields.len()),
        });
    }
    Ok(fields)
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str, line_no: usize) -> Result<T, IoError> {
    s.parse().map_err(|_| IoError::Parse {
        line: line_no,
        message: format!("cannot parse {what} from `{s}`"),
    })
}

// ---------------------------------------------------------------------------
// Packet traces
// ---------------------------------------------------------------------------

pub const TRACE_HEADER: &str = "packet_id,length_bytes,arrival_ns,departure_ns";
pub const ARRIVALS_HEADER: &str = "packet_id,length_bytes,arrival_ns";

pub fn write_trace_string(trace: &MeasuredTrace) -> Result<String, IoError> {
    let mut out = String::with_capacity(32 * trace.len() + 64);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace.records() {
        if r.length_bits % 8 != 0 {
            return Err(IoError::NonByteLength {
                id: r.id,
                bits: r.length_bits,
            });
        }
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.id,
            r.length_bits / 8,
            s_to_ns(r.arrival_s),
            s_to_ns(r.departure_s)
        );
    }
    Ok(out)
}

pub fn write_trace(trace: &MeasuredTrace, path: &Path) -> Result<(), IoError> {
    Ok(fs::write(path, write_trace_string(trace)?)?)
}

pub fn read_trace_from<R: Read>(reader: R) -> Result<MeasuredTrace, IoError> {
    let mut records: Vec<PacketRecord> = Vec::new();
    let mut saw_header = false;
    for item in data_lines(BufReader::new(reader)) {
        let (line_no, line) = item?;
        if !saw_header {
            if line != TRACE_HEADER {
                return Err(IoError::Parse {
                    line: line_no,
                    message: format!("expected header `{TRACE_HEADER}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let f = split_fields(&line, 4, line_no)?;
        let id: u64 = parse_field(f[0], "packet_id", line_no)?;
        let length_bytes: u64 = parse_field(f[1], "length_bytes", line_no)?;
        let arrival_ns: u64 = parse_field(f[2], "arrival_ns", line_no)?;
        let departure_ns: u64 = parse_field(f[3], "departure_ns", line_no)?;
        if departure_ns <= arrival_ns {
            return Err(IoError::Rule {
                line: line_no,
                rule: format!("departure_ns {departure_ns} not after arrival_ns {arrival_ns}"),
            });
        }
        if let Some(prev) = records.last() {
            if ns_to_s(arrival_ns) < prev.arrival_s {
                return Err(IoError::Rule {
                    line: line_no,
                    rule: "arrival_ns decreased (arrivals must be non-decreasing)".into(),
                });
            }
            if ns_to_s(departure_ns) < prev.departure_s {
                return Err(IoError::Rule {
                    line: line_no,
                    rule: "departure_ns decreased (FIFO order violated)".into(),
                });
            }
        }
        records.push(PacketRecord {
            id,
            length_bits: length_bytes * 8,
            arrival_s: ns_to_s(arrival_ns),
            departure_s: ns_to_s(departure_ns),
        });
    }
    // A header-only (or fully empty) file is an empty trace.
    Ok(MeasuredTrace::from_records(records)?)
}

pub fn read_trace(path: &Path) -> Result<MeasuredTrace, IoError> {
    read_trace_from(fs::File::open(path)?)
}

pub fn write_arrivals_string(arrivals: &[Arrival]) -> Result<String, IoError> {
    let mut out = String::with_capacity(24 * arrivals.len() + 32);
    out.push_str(ARRIVALS_HEADER);
    out.push('\n');
    for a in arrivals {
        if a.length_bits % 8 != 0 {
            return Err(IoError::NonByteLength {
                id: a.id,
                bits: a.length_bits,
            });
        }
        let _ = writeln!(out, "{},{},{}", a.id, a.length_bits / 8, a.time_ns);
    }
    Ok(out)
}

pub fn write_arrivals(arrivals: &[Arrival], path: &Path) -> Result<(), IoError> {
    Ok(fs::write(path, write_arrivals_string(arrivals)?)?)
}

pub fn read_arrivals_from<R: Read>(reader: R) -> Result<Vec<Arrival>, IoError> {
    let mut arrivals: Vec<Arrival> = Vec::new();
    let mut saw_header = false;
    for item in data_lines(BufReader::new(reader)) {
        let (line_no, line) = item?;
        if !saw_header {
            if line != ARRIVALS_HEADER {
                return Err(IoError::Parse {
                    line: line_no,
                    message: format!("expected header `{ARRIVALS_HEADER}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let f = split_fields(&line, 3, line_no)?;
        let id: u64 = parse_field(f[0], "packet_id", line_no)?;
        let length_bytes: u64 = parse_field(f[1], "length_bytes", line_no)?;
        let time_ns: u64 = parse_field(f[2], "arrival_ns", line_no)?;
        if let Some(prev) = arrivals.last() {
            if time_ns < prev.time_ns {
                return Err(IoError::Rule {
                    line: line_no,
                    rule: "arrival_ns decreased (arrivals must be non-decreasing)".into(),
                });
            }
        }
        arrivals.push(Arrival {
            id,
            length_bits: length_bytes * 8,
            time_ns,
        });
    }
    Ok(arrivals)
}

pub fn read_arrivals(path: &Path) -> Result<Vec<Arrival>, IoError> {
    read_arrivals_from(fs::File::open(path)?)
}

// ---------------------------------------------------------------------------
// IO delay tables
// ---------------------------------------------------------------------------

pub const IO_TABLE_HEADER: &str = "length_bytes,load_fraction,io_delay_us";

pub fn parse_io_delay_table<R: Read>(reader: R) -> Result<IoDelayTable, IoError> {
    let mut entries = Vec::new();
    let mut saw_header = false;
    for item in data_lines(BufReader::new(reader)) {
        let (line_no, line) = item?;
        if !saw_header {
            if line != IO_TABLE_HEADER {
                return Err(IoError::Parse {
                    line: line_no,
                    message: format!("expected header `{IO_TABLE_HEADER}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let f = split_fields(&line, 3, line_no)?;
        entries.push(IoDelayEntry {
            length_bytes: parse_field(f[0], "length_bytes", line_no)?,
            load: parse_field(f[1], "load_fraction", line_no)?,
            delay_s: parse_field::<f64>(f[2], "io_delay_us", line_no)? * 1e-6,
        });
    }
    Ok(IoDelayTable::from_entries(entries)?)
}

pub fn read_io_delay_table(path: &Path) -> Result<IoDelayTable, IoError> {
    parse_io_delay_table(fs::File::open(path)?)
}

// ---------------------------------------------------------------------------
// Curve and sweep exports
// ---------------------------------------------------------------------------

pub const CURVE_HEADER: &str = "t_seconds,value_bits,slope_bps";

/// Breakpoint list of a curve as CSV, one row per segment; an origin jump
/// shows up as two rows at `t = 0`.
pub fn curve_csv(curve: &Curve) -> String {
    let mut out = String::new();
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for (t, v, s) in curve.breakpoints() {
        let _ = writeln!(out, "{t},{v},{s}");
    }
    out
}

pub const SWEEP_HEADER: &str = "length_bytes,load,burst_packets,max_delay_us,bound_ideal_us,bound_a_us,bound_b_us,bound_c_us,notes";

fn us(seconds: Option<f64>) -> String {
    match seconds {
        Some(s) if s.is_finite() => format!("{:.4}", s * 1e6),
        _ => String::new(),
    }
}

/// Sweep rows as plot-ready CSV (microseconds).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let max_delay = if r.max_delay_s.is_nan() {
            String::new()
        } else {
            format!("{:.4}", r.max_delay_s * 1e6)
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.point.length_bytes,
            r.point.load,
            r.point.burst_packets,
            max_delay,
            us(r.ideal_s),
            us(r.model_a_s),
            us(r.model_b_s),
            us(r.model_c_s),
            r.notes.join("; ").replace(',', ";")
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Key-value configs
// ---------------------------------------------------------------------------

/// A parsed `key = value` config file.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| IoError::Parse {
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigMap { values })
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T, IoError> {
        let raw = self.get(key).expect("caller checked presence");
        raw.parse().map_err(|_| IoError::BadValue {
            key: key.into(),
            message: format!("cannot parse `{raw}`"),
        })
    }

    pub fn require_str(&self, key: &str) -> Result<&str, IoError> {
        self.get(key).ok_or_else(|| IoError::MissingKey {
            key: key.into(),
            accepted: key.into(),
        })
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>, IoError> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => Ok(Some(self.parse_value(key)?)),
        }
    }

    pub fn u64_opt(&self, key: &str) -> Result<Option<u64>, IoError> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => Ok(Some(self.parse_value(key)?)),
        }
    }

    /// Dimensionless value, e.g. `load = 0.8`.
    pub fn require_f64(&self, key: &str) -> Result<f64, IoError> {
        self.require_str(key)?;
        self.parse_value(key)
    }

    /// A rate in bits per second: `<base>_bps`.
    pub fn rate_bps(&self, base: &str) -> Result<f64, IoError> {
        let key = format!("{base}_bps");
        self.require_str(&key)?;
        self.parse_value(&key)
    }

    /// A duration in seconds from `<base>_s` or `<base>_us`.
    pub fn time_s(&self, base: &str) -> Result<f64, IoError> {
        self.time_s_opt(base)?.ok_or_else(|| IoError::MissingKey {
            key: base.into(),
            accepted: format!("{base}_s, {base}_us"),
        })
    }

    pub fn time_s_opt(&self, base: &str) -> Result<Option<f64>, IoError> {
        if self.get(&format!("{base}_s")).is_some() {
            return Ok(Some(self.parse_value(&format!("{base}_s"))?));
        }
        if self.get(&format!("{base}_us")).is_some() {
            return Ok(Some(self.parse_value::<f64>(&format!("{base}_us"))? * 1e-6));
        }
        Ok(None)
    }

    /// A size in bits from `<base>_bits` or `<base>_bytes`.
    pub fn size_bits(&self, base: &str) -> Result<f64, IoError> {
        if self.get(&format!("{base}_bits")).is_some() {
            return self.parse_value(&format!("{base}_bits"));
        }
        if self.get(&format!("{base}_bytes")).is_some() {
            return Ok(self.parse_value::<f64>(&format!("{base}_bytes"))? * 8.0);
        }
        Err(IoError::MissingKey {
            key: base.into(),
            accepted: format!("{base}_bits, {base}_bytes"),
        })
    }

    /// Comma-separated list of values under one key; an empty value is an
    /// empty list.
    pub fn list_f64(&self, key: &str) -> Result<Vec<f64>, IoError> {
        let raw = self.require_str(key)?;
        if raw.trim().is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| IoError::BadValue {
                    key: key.into(),
                    message: format!("cannot parse `{s}` in list"),
                })
            })
            .collect()
    }
}

/// Server keys: `rate_bps`, `error_s`/`error_us`, `nominal_bps`.
pub fn server_from_config(cfg: &ConfigMap) -> Result<RateLatencyServer, IoError> {
    Ok(RateLatencyServer::new(
        cfg.rate_bps("rate")?,
        cfg.time_s("error")?,
        cfg.rate_bps("nominal")?,
    )?)
}

/// Flow keys, dispatched on `kind`:
///
/// - `kind = token_bucket`: `rate_bps`, `burst_bits|burst_bytes`
/// - `kind = four_tuple`: `peak_bps`, `packet_*`, `rate_bps`, `burst_*`
/// - `kind = staircase`: `period_s|period_us`, `burst_*`, `peak_bps`, `packet_*`
/// - `kind = real_source`: `packet_*`, `burst_packets`, `load`,
///   `nominal_bps`, `source_peak_bps`
pub fn flow_from_config(cfg: &ConfigMap) -> Result<FlowSpec, IoError> {
    let kind = cfg.require_str("kind")?;
    match kind {
        "token_bucket" => Ok(FlowSpec::TokenBucket(TokenBucketFlow::new(
            cfg.rate_bps("rate")?,
            cfg.size_bits("burst")?,
        )?)),
        "four_tuple" => Ok(FlowSpec::FourTuple(FourTupleFlow::new(
            cfg.rate_bps("peak")?,
            cfg.size_bits("packet")?,
            cfg.rate_bps("rate")?,
            cfg.size_bits("burst")?,
        )?)),
        "staircase" => Ok(FlowSpec::Staircase(PeriodicStaircaseFlow::new(
            cfg.time_s("period")?,
            cfg.size_bits("burst")?,
            cfg.rate_bps("peak")?,
            cfg.size_bits("packet")?,
        )?)),
        "real_source" => Ok(FlowSpec::RealSource(RealSourceFlow::from_load(
            cfg.size_bits("packet")?,
            cfg.require_f64("burst_packets")? as u32,
            cfg.require_f64("load")?,
            cfg.rate_bps("nominal")?,
            cfg.rate_bps("source_peak")?,
        )?)),
        other => Err(IoError::BadValue {
            key: "kind".into(),
            message: format!(
                "unknown flow kind `{other}` (token_bucket, four_tuple, staircase, real_source)"
            ),
        }),
    }
}

// ---------------------------------------------------------------------------
// Bundled reference datasets
// ---------------------------------------------------------------------------

const IO_DELAY_CSV: &str = include_str!("../data/io_delay_reference.csv");
const SERVICE_PARAMS_CSV: &str = include_str!("../data/service_params_reference.csv");
const MEASURED_DELAY_CSV: &str = include_str!("../data/measured_delay_reference.csv");
const MEASURED_ANCHORS_CSV: &str = include_str!("../data/measured_anchors.csv");

const IO_DELAY_FNV: u64 = 0xab8b1fc50e40fa5f;
const SERVICE_PARAMS_FNV: u64 = 0x2a59a5dc1126530e;
const MEASURED_DELAY_FNV: u64 = 0x149695ba7f068b1a;
const MEASURED_ANCHORS_FNV: u64 = 0x844e9f705ccfb8b8;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn verify(name: &str, text: &str, expected: u64) -> Result<(), IoError> {
    let actual = fnv1a64(text.as_bytes());
    if actual != expected {
        return Err(IoError::Checksum {
            name: name.into(),
            expected,
            actual,
        });
    }
    Ok(())
}

/// Reference service-curve parameters per packet length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceParamRow {
    pub length_bytes: u32,
    pub service_rate_bps: f64,
    pub error_term_s: f64,
}

/// Reference measured maximum delay for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredDelayRow {
    pub length_bytes: u32,
    pub load: f64,
    pub burst_packets: u32,
    pub max_delay_s: f64,
    pub variance_us2: f64,
}

/// A named anchor from the measured comparison runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorRow {
    pub name: String,
    pub length_bytes: u32,
    pub load: f64,
    pub burst_packets: u32,
    pub measured_s: f64,
    pub model_b_s: f64,
}

/// The bundled measurement datasets, checksum-verified.
#[derive(Debug, Clone)]
pub struct ReferenceDataset {
    pub io_delays: IoDelayTable,
    pub service_params: Vec<ServiceParamRow>,
    pub measured_delays: Vec<MeasuredDelayRow>,
    pub anchors: Vec<AnchorRow>,
}

impl ReferenceDataset {
    pub fn load() -> Result<Self, IoError> {
        verify("io_delay_reference", IO_DELAY_CSV, IO_DELAY_FNV)?;
        verify("service_params_reference", SERVICE_PARAMS_CSV, SERVICE_PARAMS_FNV)?;
        verify("measured_delay_reference", MEASURED_DELAY_CSV, MEASURED_DELAY_FNV)?;
        verify("measured_anchors", MEASURED_ANCHORS_CSV, MEASURED_ANCHORS_FNV)?;

        let io_delays = parse_io_delay_table(IO_DELAY_CSV.as_bytes())?;

        let mut service_params = Vec::new();
        let mut lines = data_lines(BufReader::new(SERVICE_PARAMS_CSV.as_bytes()));
        lines.next().transpose()?; // header
        for item in lines {
            let (line_no, line) = item?;
            let f = split_fields(&line, 3, line_no)?;
            service_params.push(ServiceParamRow {
                length_bytes: parse_field(f[0], "length_bytes", line_no)?,
                service_rate_bps: parse_field::<f64>(f[1], "service_rate_mbps", line_no)? * 1e6,
                error_term_s: parse_field::<f64>(f[2], "error_term_us", line_no)? * 1e-6,
            });
        }

        let mut measured_delays = Vec::new();
        let mut lines = data_lines(BufReader::new(MEASURED_DELAY_CSV.as_bytes()));
        lines.next().transpose()?;
        for item in lines {
            let (line_no, line) = item?;
            let f = split_fields(&line, 5, line_no)?;
            measured_delays.push(MeasuredDelayRow {
                length_bytes: parse_field(f[0], "length_bytes", line_no)?,
                load: parse_field(f[1], "load_fraction", line_no)?,
                burst_packets: parse_field(f[2], "burst_packets", line_no)?,
                max_delay_s: parse_field::<f64>(f[3], "max_delay_us", line_no)? * 1e-6,
                variance_us2: parse_field(f[4], "variance_us2", line_no)?,
            });
        }

        let mut anchors = Vec::new();
        let mut lines = data_lines(BufReader::new(MEASURED_ANCHORS_CSV.as_bytes()));
        lines.next().transpose()?;
        for item in lines {
            let (line_no, line) = item?;
            let f = split_fields(&line, 6, line_no)?;
            anchors.push(AnchorRow {
                name: f[0].to_string(),
                length_bytes: parse_field(f[1], "length_bytes", line_no)?,
                load: parse_field(f[2], "load_fraction", line_no)?,
                burst_packets: parse_field(f[3], "burst_packets", line_no)?,
                measured_s: parse_field::<f64>(f[4], "measured_us", line_no)? * 1e-6,
                model_b_s: parse_field::<f64>(f[5], "model_b_us", line_no)? * 1e-6,
            });
        }

        Ok(ReferenceDataset {
            io_delays,
            service_params,
            measured_delays,
            anchors,
        })
    }

    pub fn measured_delay(&self, length_bytes: u32, load: f64, burst_packets: u32) -> Option<f64> {
        self.measured_delays
            .iter()
            .find(|r| {
                r.length_bytes == length_bytes
                    && (r.load - load).abs() < 1e-9
                    && r.burst_packets == burst_packets
            })
            .map(|r| r.max_delay_s)
    }

    pub fn service_params_for(&self, length_bytes: u32) -> Option<&ServiceParamRow> {
        self.service_params
            .iter()
            .find(|r| r.length_bytes == length_bytes)
    }
}
