//! CSV interchange layer: benchmark records and the site registry.
//!
//! The record schema is the toolkit's wire format. Files are UTF-8 with LF
//! line endings, RFC-4180 quoting, and floats rendered with up to nine
//! significant digits so one encode/decode round trip is byte-canonical.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use thiserror::Error;

/// Column order of the benchmark-record schema.
pub const RECORD_HEADER: [&str; 10] = [
    "hostname", "site", "timestamp", "metric", "class", "kind", "value", "unit", "status", "note",
];

/// Metric names emitted by the suite. The schema treats `metric` as open
/// text; these are the names this toolkit produces and validates units for.
pub mod metric {
    pub const OP_LATENCY: &str = "op_latency";
    pub const BOGOMFLOPS: &str = "bogomflops";
    pub const MEM_LATENCY: &str = "mem_latency";
    pub const CACHE_LEVEL: &str = "cache_level";
    pub const STREAM_BW: &str = "stream_bw";
    pub const STREAM_LAT: &str = "stream_lat";
    pub const STREAM2_BW: &str = "stream2_bw";
    pub const STREAM2_LAT: &str = "stream2_lat";
    pub const INVENTORY: &str = "inventory";
}

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("row {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("duplicate site {0:?} in registry")]
    DuplicateSite(String),
    #[error("row {line}: jobslots {value:?} is not a non-negative integer")]
    NonNumericJobslots { line: u64, value: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// A UTC instant at second resolution, rendered as ISO-8601 with a `Z` suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UtcTimestamp(DateTime<Utc>);

impl UtcTimestamp {
    pub fn now() -> Self {
        Self::from_unix(Utc::now().timestamp())
    }

    pub fn from_unix(secs: i64) -> Self {
        UtcTimestamp(Utc.timestamp_opt(secs, 0).single().expect("valid epoch seconds"))
    }

    /// Fixed instant used when a deterministic run needs a wall timestamp.
    pub fn fixed() -> Self {
        Self::from_unix(946_684_800) // 2000-01-01T00:00:00Z
    }

    pub fn unix(&self) -> i64 {
        self.0.timestamp()
    }

    /// Filename-safe form without separators, e.g. `20000101T000000Z`.
    pub fn compact(&self) -> String {
        self.0.format("%Y%m%dT%H%M%SZ").to_string()
    }
}

impl fmt::Display for UtcTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.to_rfc3339_opts(SecondsFormat::Secs, true))
    }
}

impl FromStr for UtcTimestamp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let dt = DateTime::parse_from_rfc3339(s).map_err(|e| format!("bad timestamp {s:?}: {e}"))?;
        Ok(UtcTimestamp(dt.with_timezone(&Utc)))
    }
}

/// Measurement unit of a record value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Ns,
    MBps,
    Bytes,
    /// Unitless rows (inventory text captured in `note`).
    None,
}

impl Unit {
    pub fn as_str(&self) -> &'static str {
        match self {
            Unit::Ns => "ns",
            Unit::MBps => "MBps",
            Unit::Bytes => "bytes",
            Unit::None => "",
        }
    }
}

impl FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ns" => Ok(Unit::Ns),
            "MBps" => Ok(Unit::MBps),
            "bytes" => Ok(Unit::Bytes),
            "" => Ok(Unit::None),
            other => Err(format!("unknown unit {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Missing,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Missing => "missing",
        }
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(Status::Ok),
            "missing" => Ok(Status::Missing),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

/// One measured metric on one node at one time; the CSV row unit.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub hostname: String,
    /// May stay empty until the record is joined with a site registry.
    pub site: String,
    pub timestamp: UtcTimestamp,
    pub metric: String,
    pub class: String,
    pub kind: String,
    /// Empty for `missing` rows and for text-valued inventory rows.
    pub value: Option<f64>,
    pub unit: Unit,
    pub status: Status,
    pub note: String,
}

impl BenchmarkRecord {
    pub fn ok(
        hostname: &str,
        site: &str,
        timestamp: UtcTimestamp,
        metric: &str,
        class: &str,
        kind: &str,
        value: f64,
        unit: Unit,
        note: String,
    ) -> Self {
        BenchmarkRecord {
            hostname: hostname.to_string(),
            site: site.to_string(),
            timestamp,
            metric: metric.to_string(),
            class: class.to_string(),
            kind: kind.to_string(),
            value: Some(value),
            unit,
            status: Status::Ok,
            note,
        }
    }

    pub fn missing(
        hostname: &str,
        site: &str,
        timestamp: UtcTimestamp,
        metric: &str,
        class: &str,
        kind: &str,
        unit: Unit,
        reason: String,
    ) -> Self {
        BenchmarkRecord {
            hostname: hostname.to_string(),
            site: site.to_string(),
            timestamp,
            metric: metric.to_string(),
            class: class.to_string(),
            kind: kind.to_string(),
            value: None,
            unit,
            status: Status::Missing,
            note: reason,
        }
    }
}

/// External knowledge about a site: jobslot count and middleware label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteRegistryEntry {
    pub site: String,
    pub jobslots: u64,
    pub middleware: String,
}

/// The unit each known metric must carry. Unknown metric names are not
/// constrained.
pub fn expected_unit(metric: &str) -> Option<Unit> {
    match metric {
        metric::OP_LATENCY | metric::BOGOMFLOPS | metric::MEM_LATENCY | metric::STREAM_LAT
        | metric::STREAM2_LAT => Some(Unit::Ns),
        metric::STREAM_BW | metric::STREAM2_BW => Some(Unit::MBps),
        metric::CACHE_LEVEL => Some(Unit::Bytes),
        metric::INVENTORY => Some(Unit::None),
        _ => None,
    }
}

/// Render a float with up to nine significant digits, no locale separators.
///
/// The rendering is canonical: formatting, parsing and re-formatting yields
/// the same text, which is what makes an encode/decode round trip stable.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        // Defensive: valid records are finite. `f64::from_str` accepts these.
        return if v.is_nan() {
            "NaN".to_string()
        } else if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let exp_form = format!("{:.8e}", v); // e.g. "2.50000000e0"
    let (mantissa, exp) = exp_form.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("numeric exponent");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };

    let body = if (-4..=12).contains(&exp) {
        positional(digits, exp)
    } else if digits.len() == 1 {
        format!("{digits}e{exp}")
    } else {
        format!("{}.{}e{exp}", &digits[..1], &digits[1..])
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// Lay out significant digits positionally for a given decimal exponent of
/// the leading digit.
fn positional(digits: &str, exp: i32) -> String {
    let n = digits.len() as i32;
    if exp < 0 {
        let zeros = (-exp - 1) as usize;
        format!("0.{}{}", "0".repeat(zeros), digits)
    } else if exp + 1 >= n {
        let zeros = (exp + 1 - n) as usize;
        format!("{}{}", digits, "0".repeat(zeros))
    } else {
        let split = (exp + 1) as usize;
        format!("{}.{}", &digits[..split], &digits[split..])
    }
}

/// Serialize records in input order under the fixed header.
pub fn encode_csv(records: &[BenchmarkRecord]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(RECORD_HEADER).expect("in-memory write");
    for r in records {
        let value = r.value.map(format_value).unwrap_or_default();
        w.write_record([
            r.hostname.as_str(),
            r.site.as_str(),
            &r.timestamp.to_string(),
            r.metric.as_str(),
            r.class.as_str(),
            r.kind.as_str(),
            &value,
            r.unit.as_str(),
            r.status.as_str(),
            r.note.as_str(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

/// How decode reacts to malformed rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// First malformed row aborts the decode.
    Strict,
    /// Malformed rows are skipped and reported.
    Lenient,
}

/// Non-fatal findings from a lenient decode.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeWarning {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct Decoded {
    pub records: Vec<BenchmarkRecord>,
    /// Rows skipped in lenient mode, plus notices about ignored columns.
    pub warnings: Vec<DecodeWarning>,
}

/// Inverse of [`encode_csv`]. Unknown extra columns are ignored with a
/// warning; in `Strict` mode the first malformed row aborts.
pub fn decode_csv(text: &str, mode: DecodeMode) -> Result<Decoded, ResultsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let mut index = Vec::with_capacity(RECORD_HEADER.len());
    for want in RECORD_HEADER {
        let pos = headers
            .iter()
            .position(|h| h == want)
            .ok_or_else(|| ResultsError::MissingColumn(want.to_string()))?;
        index.push(pos);
    }
    let mut out = Decoded::default();
    for extra in headers.iter().filter(|h| !RECORD_HEADER.contains(h)) {
        out.warnings.push(DecodeWarning {
            line: 1,
            reason: format!("ignoring unknown column {extra:?}"),
        });
    }

    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&row, &index) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => match mode {
                DecodeMode::Strict => return Err(ResultsError::Row { line, reason }),
                DecodeMode::Lenient => out.warnings.push(DecodeWarning { line, reason }),
            },
        }
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord, index: &[usize]) -> Result<BenchmarkRecord, String> {
    let field = |i: usize| -> Result<&str, String> {
        row.get(index[i]).ok_or_else(|| "short row".to_string())
    };
    let timestamp: UtcTimestamp = field(2)?.parse()?;
    let metric = field(3)?.to_string();
    let value_text = field(6)?;
    let value = if value_text.is_empty() {
        None
    } else {
        Some(
            value_text
                .parse::<f64>()
                .map_err(|e| format!("bad value {value_text:?}: {e}"))?,
        )
    };
    let unit: Unit = field(7)?.parse()?;
    let status: Status = field(8)?.parse()?;

    if let Some(expected) = expected_unit(&metric) {
        if unit != expected {
            return Err(format!(
                "unit mismatch: metric {metric:?} expects {:?}, got {:?}",
                expected.as_str(),
                unit.as_str()
            ));
        }
    }
    if status == Status::Missing && value.is_some() {
        return Err("missing row carries a value".to_string());
    }

    Ok(BenchmarkRecord {
        hostname: field(0)?.to_string(),
        site: field(1)?.to_string(),
        timestamp,
        metric,
        class: field(4)?.to_string(),
        kind: field(5)?.to_string(),
        value,
        unit,
        status,
        note: field(9)?.to_string(),
    })
}

/// Parse a site registry (`site,jobslots,middleware`).
pub fn load_registry(text: &str) -> Result<Vec<SiteRegistryEntry>, ResultsError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let want = ["site", "jobslots", "middleware"];
    let mut index = Vec::with_capacity(want.len());
    for w in want {
        let pos = headers
            .iter()
            .position(|h| h == w)
            .ok_or_else(|| ResultsError::MissingColumn(w.to_string()))?;
        index.push(pos);
    }

    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let site = row.get(index[0]).unwrap_or("").to_string();
        let slots_text = row.get(index[1]).unwrap_or("");
        let jobslots: u64 = slots_text.parse().map_err(|_| ResultsError::NonNumericJobslots {
            line,
            value: slots_text.to_string(),
        })?;
        if !seen.insert(site.clone()) {
            return Err(ResultsError::DuplicateSite(site));
        }
        entries.push(SiteRegistryEntry {
            site,
            jobslots,
            middleware: row.get(index[2]).unwrap_or("").to_string(),
        });
    }
    Ok(entries)
}
