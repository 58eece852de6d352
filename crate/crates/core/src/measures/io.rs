//! Measure files: CSV with header `weight,x1,...,xd`, one atom per row.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::DiscreteMeasure;
use crate::error::{Error, Result};

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

fn reader<R: Read>(src: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(src)
}

fn parse_row(record: &csv::StringRecord, width: usize) -> Result<Vec<f64>> {
    let line = record.position().map(|p| p.line()).unwrap_or(0);
    if record.len() != width {
        return Err(parse_err(
            line,
            format!("expected {width} fields, found {}", record.len()),
        ));
    }
    record
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("invalid number `{f}`")))
        })
        .collect()
}

/// Reads a measure from any reader.
pub fn read_measure<R: Read>(src: R) -> Result<DiscreteMeasure> {
    let mut rdr = reader(src);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < 2 || &header[0] != "weight" {
        return Err(parse_err(1, "header must be `weight,x1,...,xd`"));
    }
    let width = header.len();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let row = parse_row(&record, width)?;
        if row[0] < 0.0 {
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            return Err(parse_err(line, format!("negative weight {}", row[0])));
        }
        weights.push(row[0]);
        points.push(row[1..].to_vec());
    }
    if points.is_empty() {
        return Err(parse_err(2, "no atoms"));
    }
    DiscreteMeasure::new(points, weights)
}

/// Loads a measure CSV. Weights are renormalized (with a warning) when the
/// written total is not one.
pub fn load_measure(path: impl AsRef<Path>) -> Result<DiscreteMeasure> {
    read_measure(File::open(path)?)
}

/// Loads bare query points from a CSV with header `x1,...,xd`. A leading
/// `weight` column, if present, is ignored.
pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let mut rdr = reader(File::open(path)?);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(parse_err(1, "empty header"));
    }
    let skip = usize::from(&header[0] == "weight");
    let width = header.len();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        out.push(parse_row(&record, width)?[skip..].to_vec());
    }
    Ok(out)
}

/// Writes a measure as CSV. Numbers use the shortest representation that
/// parses back to the same `f64`.
pub fn write_measure<W: Write>(measure: &DiscreteMeasure, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    write!(out, "weight")?;
    for k in 1..=measure.dim() {
        write!(out, ",x{k}")?;
    }
    writeln!(out)?;
    for (p, w) in measure.points().iter().zip(measure.weights()) {
        write!(out, "{w:?}")?;
        for v in p {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_measure(measure: &DiscreteMeasure, path: impl AsRef<Path>) -> Result<()> {
    write_measure(measure, File::create(path)?)
}
