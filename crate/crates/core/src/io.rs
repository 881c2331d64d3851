//! Text file formats: signal and RRI input, peak annotation files and the
//! consolidated metrics table.
//!
//! Signal files hold numbers in a single column or a single row, separated by
//! commas, semicolons or whitespace. Peak files carry `# key=value` header
//! lines followed by one sample index per line. Metric tables are CSV with one
//! row per (record, n, m); `NA` marks a metric that could not be computed and an
//! empty cell marks a column that does not apply to the row.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{extract_record_id, first_non_increasing, EcgRecord, IbiSeries, MetricsReport, ModelError, PeakAnnotations};

pub const NA: &str = "NA";
pub const REPORT_DIGITS: usize = 10;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, field {field}: '{text}' is not a finite number")]
    MalformedNumeric { line: usize, field: usize, text: String },
    #[error("line {line}: file mixes row and column layouts")]
    MixedLayout { line: usize },
    #[error("file contains no values")]
    EmptyFile,
    #[error("ECG input requires a sampling rate")]
    MissingSamplingRate,
    #[error("peaks file: {0}")]
    SchemaViolation(String),
    #[error("report table: {0}")]
    Table(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl FormatError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Ecg,
    #[default]
    Rri,
    Peaks,
}

impl FromStr for InputKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ecg" => Ok(InputKind::Ecg),
            "rri" | "ibi" => Ok(InputKind::Rri),
            "peaks" => Ok(InputKind::Peaks),
            other => Err(format!("unknown input type '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RriUnit {
    #[default]
    Seconds,
    Milliseconds,
}

impl RriUnit {
    fn to_ms(self) -> f64 {
        match self {
            RriUnit::Seconds => 1000.0,
            RriUnit::Milliseconds => 1.0,
        }
    }
}

impl FromStr for RriUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "s" | "sec" | "seconds" => Ok(RriUnit::Seconds),
            "ms" | "milliseconds" => Ok(RriUnit::Milliseconds),
            other => Err(format!("unknown RRI unit '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDescriptor {
    pub path: PathBuf,
    pub kind: InputKind,
    pub fs: Option<f64>,
    #[serde(default)]
    pub rri_unit: RriUnit,
    #[serde(default)]
    pub prefix: String,
    #[serde(default)]
    pub postfix: String,
}

impl InputDescriptor {
    pub fn new(path: impl Into<PathBuf>, kind: InputKind) -> Self {
        Self {
            path: path.into(),
            kind,
            fs: None,
            rri_unit: RriUnit::Seconds,
            prefix: String::new(),
            postfix: String::new(),
        }
    }

    pub fn record_id(&self) -> String {
        let name = self
            .path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.display().to_string());
        extract_record_id(&name, &self.prefix, &self.postfix)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalData {
    Ecg(EcgRecord),
    Rri(IbiSeries),
    Peaks(PeakAnnotations),
}

impl SignalData {
    pub fn record_id(&self) -> &str {
        match self {
            SignalData::Ecg(r) => &r.record_id,
            SignalData::Rri(r) => &r.record_id,
            SignalData::Peaks(p) => &p.record_id,
        }
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    let mut fields: Vec<&str> = line
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|f| !f.is_empty())
        .collect();
    // tolerate a UTF-8 byte order mark on the first field
    if let Some(first) = fields.first_mut() {
        *first = first.trim_start_matches('\u{feff}');
    }
    fields
}

fn parse_number(text: &str, line: usize, field: usize) -> Result<f64, FormatError> {
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| FormatError::MalformedNumeric {
            line,
            field,
            text: text.to_string(),
        })
}

/// Parses a single-column or single-row numeric file. Blank lines are ignored.
pub fn parse_numeric_text(text: &str) -> Result<Vec<f64>, FormatError> {
    let mut values = Vec::new();
    let mut row_layout: Option<bool> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let fields = split_fields(line);
        if fields.is_empty() {
            continue;
        }
        match row_layout {
            None => row_layout = Some(fields.len() > 1),
            Some(true) => return Err(FormatError::MixedLayout { line: line_no }),
            Some(false) if fields.len() > 1 => return Err(FormatError::MixedLayout { line: line_no }),
            Some(false) => {}
        }
        for (f, text) in fields.iter().enumerate() {
            values.push(parse_number(text, line_no, f + 1)?);
        }
    }
    if values.is_empty() {
        return Err(FormatError::EmptyFile);
    }
    Ok(values)
}

/// Interprets file contents according to `desc` (the path is used only for
/// the record ID).
pub fn parse_signal(text: &str, desc: &InputDescriptor) -> Result<SignalData, FormatError> {
    let record_id = desc.record_id();
    match desc.kind {
        InputKind::Peaks => parse_peaks(text, &record_id).map(SignalData::Peaks),
        InputKind::Ecg => {
            let fs = desc.fs.ok_or(FormatError::MissingSamplingRate)?;
            let samples = parse_numeric_text(text)?;
            Ok(SignalData::Ecg(EcgRecord::new(record_id, fs, samples)?))
        }
        InputKind::Rri => {
            let scale = desc.rri_unit.to_ms();
            let values = parse_numeric_text(text)?.into_iter().map(|v| v * scale).collect();
            Ok(SignalData::Rri(IbiSeries::from_intervals(record_id, values)?))
        }
    }
}

pub fn read_signal(desc: &InputDescriptor) -> Result<SignalData, FormatError> {
    let text = fs::read_to_string(&desc.path).map_err(|e| FormatError::io(&desc.path, e))?;
    parse_signal(&text, desc)
}

/// Serialises peaks in the annotation file layout.
pub fn format_peaks(peaks: &PeakAnnotations) -> String {
    let mut out = format!("# record={}\n# fs_hz={}\n", peaks.record_id, peaks.fs);
    if let Some(seg) = &peaks.segment {
        out.push_str(&format!("# segment={}:{}\n", seg.start, seg.end));
    }
    for p in &peaks.peaks {
        out.push_str(&p.to_string());
        out.push('\n');
    }
    out
}

/// Parses a peaks file. `fallback_id` is used when the record header is absent.
pub fn parse_peaks(text: &str, fallback_id: &str) -> Result<PeakAnnotations, FormatError> {
    let violation = |msg: String| FormatError::SchemaViolation(msg);
    let mut headers: BTreeMap<String, String> = BTreeMap::new();
    let mut peaks = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.trim().split_once('=') {
                headers.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        let value: usize = line
            .parse()
            .map_err(|_| violation(format!("line {}: '{line}' is not a sample index", idx + 1)))?;
        peaks.push(value);
    }
    let fs: f64 = headers
        .get("fs_hz")
        .ok_or_else(|| violation("missing '# fs_hz=' header".into()))?
        .parse()
        .map_err(|_| violation("fs_hz is not a number".into()))?;
    if let Some(pos) = first_non_increasing(&peaks) {
        return Err(violation(format!("indices not strictly increasing at entry {}", pos + 1)));
    }
    let segment = match headers.get("segment") {
        None => None,
        Some(s) => {
            let (a, b) = s
                .split_once(':')
                .ok_or_else(|| violation(format!("segment '{s}' is not start:end")))?;
            let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| violation(format!("segment '{s}' is not start:end")));
            Some(parse(a)?..parse(b)?)
        }
    };
    let record = headers
        .get("record")
        .cloned()
        .unwrap_or_else(|| fallback_id.to_string());
    let mut ann = PeakAnnotations::new(record, fs, peaks).map_err(|e| violation(e.to_string()))?;
    ann.segment = segment;
    Ok(ann)
}

pub fn read_peaks(path: &Path) -> Result<PeakAnnotations, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let fallback = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_peaks(&text, &fallback)
}

pub fn write_peaks(path: &Path, peaks: &PeakAnnotations) -> Result<(), FormatError> {
    fs::write(path, format_peaks(peaks)).map_err(|e| FormatError::io(path, e))
}

/// `%.{digits}g`-style formatting: `digits` significant digits, trailing
/// zeros trimmed, scientific notation only for very large or small magnitudes.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return NA.into();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn column_name(n: usize, m: usize, metric: &str) -> String {
    format!("hr{n}v{m}_{metric}")
}

/// A row of the consolidated table: either a report or a record-level error.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum TableRow {
    Report(MetricsReport),
    Error { record_id: String, message: String },
}

impl fmt::Display for TableRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableRow::Report(r) => write!(f, "{} (n={}, m={})", r.record_id, r.n, r.m),
            TableRow::Error { record_id, message } => write!(f, "{record_id}: {message}"),
        }
    }
}

const FIXED_COLUMNS: [&str; 5] = ["record_id", "n", "m", "psd_method", "error"];

/// Renders rows as CSV. Metric columns are the union over rows, in order of
/// first appearance.
pub fn format_table(rows: &[TableRow]) -> Result<String, FormatError> {
    let mut columns: Vec<String> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for row in rows {
        if let TableRow::Report(r) = row {
            for (metric, _) in r.metric_values() {
                let name = column_name(r.n, r.m, metric);
                if !index.contains_key(&name) {
                    index.insert(name.clone(), columns.len());
                    columns.push(name);
                }
            }
        }
    }
    let table_err = |e: csv::Error| FormatError::Table(e.to_string());
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let header: Vec<&str> = FIXED_COLUMNS
        .iter()
        .copied()
        .chain(columns.iter().map(String::as_str))
        .collect();
    w.write_record(&header).map_err(table_err)?;
    for row in rows {
        let mut cells = vec![String::new(); FIXED_COLUMNS.len() + columns.len()];
        match row {
            TableRow::Report(r) => {
                cells[0] = r.record_id.clone();
                cells[1] = r.n.to_string();
                cells[2] = r.m.to_string();
                cells[3] = r.freq.method.to_string();
                for (metric, value) in r.metric_values() {
                    let col = index[&column_name(r.n, r.m, metric)];
                    cells[FIXED_COLUMNS.len() + col] = match value {
                        Some(v) => format_significant(v, REPORT_DIGITS),
                        None => NA.to_string(),
                    };
                }
            }
            TableRow::Error { record_id, message } => {
                cells[0] = record_id.clone();
                cells[4] = message.clone();
            }
        }
        w.write_record(&cells).map_err(table_err)?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::Table(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| FormatError::Table(e.to_string()))
}

pub fn format_report(reports: &[MetricsReport]) -> Result<String, FormatError> {
    let rows: Vec<TableRow> = reports.iter().cloned().map(TableRow::Report).collect();
    format_table(&rows)
}

pub fn write_table(path: &Path, rows: &[TableRow]) -> Result<(), FormatError> {
    fs::write(path, format_table(rows)?).map_err(|e| FormatError::io(path, e))
}

pub fn write_report(reports: &[MetricsReport], path: &Path) -> Result<(), FormatError> {
    fs::write(path, format_report(reports)?).map_err(|e| FormatError::io(path, e))
}

/// One parsed table row. Metric names have the `hr{n}v{m}_` prefix removed;
/// `None` values were `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub record_id: String,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub psd_method: Option<String>,
    pub error: Option<String>,
    pub metrics: BTreeMap<String, Option<f64>>,
}

impl From<&MetricsReport> for ReportRow {
    fn from(r: &MetricsReport) -> Self {
        Self {
            record_id: r.record_id.clone(),
            n: Some(r.n),
            m: Some(r.m),
            psd_method: Some(r.freq.method.to_string()),
            error: None,
            metrics: r
                .metric_values()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }
}

pub fn parse_table(text: &str) -> Result<Vec<ReportRow>, FormatError> {
    let table_err = |e: csv::Error| FormatError::Table(e.to_string());
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(table_err)?
        .iter()
        .map(str::to_string)
        .collect();
    for (i, expected) in FIXED_COLUMNS.iter().enumerate() {
        if header.get(i).map(String::as_str) != Some(*expected) {
            return Err(FormatError::Table(format!("column {} must be '{expected}'", i + 1)));
        }
    }
    let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(table_err)?;
        let get = |i: usize| record.get(i).unwrap_or("");
        let parse_usize = |s: &str| -> Result<Option<usize>, FormatError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| FormatError::Table(format!("row {}: bad plan value '{s}'", line + 1)))
            }
        };
        let n = parse_usize(get(1))?;
        let m = parse_usize(get(2))?;
        let mut metrics = BTreeMap::new();
        if let (Some(n), Some(m)) = (n, m) {
            let prefix = format!("hr{n}v{m}_");
            for (i, name) in header.iter().enumerate().skip(FIXED_COLUMNS.len()) {
                let Some(metric) = name.strip_prefix(&prefix) else { continue };
                let cell = get(i);
                if cell.is_empty() {
                    continue;
                }
                let value = if cell == NA {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|_| {
                        FormatError::Table(format!("row {}, column {name}: '{cell}' is not a number", line + 1))
                    })?)
                };
                metrics.insert(metric.to_string(), value);
            }
        }
        rows.push(ReportRow {
            record_id: get(0).to_string(),
            n,
            m,
            psd_method: opt(get(3)),
            error: opt(get(4)),
            metrics,
        });
    }
    Ok(rows)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_table(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rri_desc(name: &str) -> InputDescriptor {
        InputDescriptor::new(name, InputKind::Rri)
    }

    fn rri(data: SignalData) -> Vec<f64> {
        match data {
            SignalData::Rri(s) => s.intervals_ms,
            other => panic!("expected RRI, got {other:?}"),
        }
    }

    #[test]
    fn column_of_seconds() {
        let v = rri(parse_signal("0.8\n0.81\n0.79\n", &rri_desc("a.txt")).unwrap());
        assert_eq!(v, vec![800.0, 810.0, 790.0]);
    }

    #[test]
    fn single_row() {
        let v = rri(parse_signal("0.8,0.81,0.79", &rri_desc("a.csv")).unwrap());
        assert_eq!(v, vec![800.0, 810.0, 790.0]);
        let tabs = rri(parse_signal("0.8\t0.81  0.79\n\n", &rri_desc("a.txt")).unwrap());
        assert_eq!(tabs, v);
    }

    #[test]
    fn milliseconds_pass_through() {
        let d = InputDescriptor {
            rri_unit: RriUnit::Milliseconds,
            ..rri_desc("a.txt")
        };
        assert_eq!(rri(parse_signal("812\n\n790\n", &d).unwrap()), vec![812.0, 790.0]);
    }

    #[test]
    fn malformed_and_ambiguous_inputs() {
        assert!(matches!(
            parse_numeric_text("abc"),
            Err(FormatError::MalformedNumeric { line: 1, field: 1, .. })
        ));
        assert!(matches!(
            parse_numeric_text("1\n2\nnan"),
            Err(FormatError::MalformedNumeric { line: 3, .. })
        ));
        assert!(matches!(parse_numeric_text("1,2\n3,4"), Err(FormatError::MixedLayout { line: 2 })));
        assert!(matches!(parse_numeric_text("1\n2,3"), Err(FormatError::MixedLayout { line: 2 })));
        assert!(matches!(parse_numeric_text("\n \n"), Err(FormatError::EmptyFile)));
    }

    #[test]
    fn ecg_requires_sampling_rate() {
        let d = InputDescriptor::new("e.txt", InputKind::Ecg);
        assert!(matches!(parse_signal("1\n2", &d), Err(FormatError::MissingSamplingRate)));
        let d = InputDescriptor { fs: Some(128.0), ..d };
        assert!(matches!(parse_signal("1\n2", &d), Ok(SignalData::Ecg(_))));
    }

    #[test]
    fn record_id_from_affixes() {
        let d = InputDescriptor {
            prefix: "Demo_".into(),
            postfix: ".txt".into(),
            ..rri_desc("/data/Demo_NSR16786.txt")
        };
        assert_eq!(d.record_id(), "NSR16786");
    }

    #[test]
    fn peaks_schema_violations() {
        assert!(matches!(parse_peaks("# fs_hz=128\n10\n10\n", "x"), Err(FormatError::SchemaViolation(_))));
        assert!(matches!(parse_peaks("# record=a\n10\n20\n", "x"), Err(FormatError::SchemaViolation(_))));
        assert!(matches!(parse_peaks("# fs_hz=128\n10\nfoo\n", "x"), Err(FormatError::SchemaViolation(_))));
    }

    #[test]
    fn peaks_header_fields() {
        let p = parse_peaks("# record=r1\n# fs_hz=360\n# segment=100:900\n150\n420\n", "x").unwrap();
        assert_eq!(p.record_id, "r1");
        assert_eq!(p.fs, 360.0);
        assert_eq!(p.segment, Some(100..900));
        assert_eq!(p.peaks, vec![150, 420]);
        assert_eq!(p.version, 0);
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(801.25, 10), "801.25");
        assert_eq!(format_significant(1.0 / 3.0, 10), "0.3333333333");
        assert_eq!(format_significant(12.0, 10), "12");
        assert_eq!(format_significant(123456789012.0, 10), "1.23456789e11");
        assert_eq!(format_significant(-0.000001234, 10), "-1.234e-6");
        assert_eq!(format_significant(0.0, 10), "0");
    }

    #[test]
    fn empty_report_is_header_only() {
        let text = format_report(&[]).unwrap();
        assert_eq!(text.trim_end(), "record_id,n,m,psd_method,error");
    }

    proptest! {
        #[test]
        fn peaks_round_trip(
            set in proptest::collection::btree_set(0usize..10_000_000, 0..300),
            fs in prop_oneof![Just(128.0f64), Just(250.0), Just(360.0), 50.0f64..2000.0],
            id in "[A-Za-z0-9_.-]{1,16}",
        ) {
            let mut p = PeakAnnotations::new(id, fs, set.into_iter().collect()).unwrap();
            p.version = 7;
            let back = parse_peaks(&format_peaks(&p), "fallback").unwrap();
            prop_assert_eq!(back.peaks, p.peaks);
            prop_assert_eq!(back.fs.to_bits(), p.fs.to_bits());
            prop_assert_eq!(back.record_id, p.record_id);
            prop_assert_eq!(back.version, 0);
        }

        #[test]
        fn significant_formatting_round_trips(x in -1e12f64..1e12) {
            let s = format_significant(x, REPORT_DIGITS);
            let back: f64 = s.parse().unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1e-300));
        }
    }
}
