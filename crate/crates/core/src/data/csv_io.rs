//! CSV ingestion and emission.
//!
//! Input files carry a header row of channel names, optionally preceded by a
//! leading `time`/`timestamp` column. The timestamp column never becomes a
//! data channel; it is only used to infer the sample rate (numeric seconds
//! or `YYYY-mm-dd HH:MM:SS` stamps). Any missing or non-numeric data cell is
//! a hard error naming its row and column — silently imputing values would
//! blur into the accommodation task this crate exists to test.

use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Expected channel layout of an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CsvSchema {
    /// Take channel names from the header as-is.
    Infer,
    /// Require exactly these channel names (after dropping any timestamp
    /// column), in order.
    Expect(Vec<String>),
}

fn is_timestamp_name(name: &str) -> bool {
    let lower = name.trim().to_ascii_lowercase();
    lower == "time" || lower == "timestamp"
}

/// Seconds between two consecutive timestamp cells, if parseable.
fn stamp_delta_seconds(a: &str, b: &str) -> Option<f64> {
    if let (Ok(x), Ok(y)) = (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        return Some(y - x);
    }
    const FORMATS: [&str; 3] = [
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M",
    ];
    for fmt in FORMATS {
        let pa = chrono::NaiveDateTime::parse_from_str(a.trim(), fmt);
        let pb = chrono::NaiveDateTime::parse_from_str(b.trim(), fmt);
        if let (Ok(x), Ok(y)) = (pa, pb) {
            return Some(y.signed_duration_since(x).num_milliseconds() as f64 / 1000.0);
        }
    }
    None
}

/// Loads a dataset from `path`. See the module docs for the accepted layout;
/// the sample rate defaults to 1 Hz when no usable timestamp column exists.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TimeSeriesDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true) // row lengths are checked manually for better errors
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Ingestion(format!("cannot open {}: {e}", path.display())))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Ingestion(format!("{}: bad header row: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() {
        return Err(Error::Ingestion(format!("{}: empty header row", path.display())));
    }

    let has_stamp = is_timestamp_name(&headers[0]);
    let data_start = usize::from(has_stamp);
    let channel_names: Vec<String> = headers[data_start..].to_vec();
    if channel_names.len() < 2 {
        return Err(Error::Ingestion(format!(
            "{}: need at least 2 data channels, found {}",
            path.display(),
            channel_names.len()
        )));
    }
    if let CsvSchema::Expect(expected) = schema {
        if &channel_names != expected {
            return Err(Error::Ingestion(format!(
                "{}: channel names {:?} do not match the expected {:?}",
                path.display(),
                channel_names,
                expected
            )));
        }
    }

    let n = channel_names.len();
    let mut values: Vec<f64> = Vec::new();
    let mut first_stamps: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1; // 1-based data row for error messages
        let record =
            record.map_err(|e| Error::Ingestion(format!("{}: row {row}: {e}", path.display())))?;
        if record.len() != headers.len() {
            return Err(Error::Ingestion(format!(
                "{}: row {row} has {} fields, header has {}",
                path.display(),
                record.len(),
                headers.len()
            )));
        }
        if has_stamp && first_stamps.len() < 2 {
            first_stamps.push(record[0].to_string());
        }
        for (c, cell) in record.iter().skip(data_start).enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Ingestion(format!(
                    "{}: row {row}, column '{}': non-numeric value '{cell}'",
                    path.display(),
                    channel_names[c]
                ))
            })?;
            values.push(v);
        }
    }

    let n_rows = values.len() / n;
    if n_rows == 0 {
        return Err(Error::Ingestion(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }

    let sample_rate_hz = match first_stamps.as_slice() {
        [a, b] => match stamp_delta_seconds(a, b) {
            Some(dt) if dt > 0.0 => 1.0 / dt,
            _ => 1.0,
        },
        _ => 1.0,
    };

    let samples = Array2::from_shape_vec((n_rows, n), values)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    TimeSeriesDataset::new(channel_names, samples, sample_rate_hz)
}

/// Writes `dataset` as a header row plus one row per sample. Values print in
/// Rust's shortest round-trip decimal form, so writing, re-loading, and
/// writing again produces a byte-identical file.
pub fn write_csv(dataset: &TimeSeriesDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Ingestion(format!("cannot create {}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "{}", dataset.channel_names().join(","))?;
    for row in dataset.samples().rows() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                write!(out, ",")?;
            }
            write!(out, "{v}")?;
            first = false;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
