//! CSV inputs (CO₂ traces, motion parameters, subject lists) and CSV outputs.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

fn table_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Table {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn open(path: &Path, has_headers: bool) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn parse_row(path: &Path, line: usize, rec: &csv::StringRecord) -> Result<Vec<f64>> {
    rec.iter()
        .enumerate()
        .map(|(j, f)| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| table_err(path, format!("line {line}, column {}: `{f}` is not a finite number", j + 1)))
        })
        .collect()
}

/// Two-column `time_s,co2_mmhg` CSV with a header line, uniformly sampled.
pub fn read_co2_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let mut rdr = open(path, true)?;
    let mut t = Vec::new();
    let mut c = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| table_err(path, e.to_string()))?;
        let row = parse_row(path, i + 2, &rec)?;
        if row.len() != 2 {
            return Err(table_err(path, format!("line {}: expected 2 columns, found {}", i + 2, row.len())));
        }
        t.push(row[0]);
        c.push(row[1]);
    }
    if t.len() < 2 {
        return Err(table_err(path, "need at least two samples"));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(table_err(path, "time column must increase"));
    }
    for (i, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-3 * dt {
            return Err(table_err(
                path,
                format!("non-uniform sampling at line {}: step {} vs {dt}", i + 3, w[1] - w[0]),
            ));
        }
    }
    TimeSeries::new(c, dt, t[0])
}

pub fn write_co2_csv(path: impl AsRef<Path>, trace: &TimeSeries) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| table_err(path, e.to_string()))?;
    let io = |e: csv::Error| table_err(path, e.to_string());
    w.write_record(["time_s", "co2_mmhg"]).map_err(io)?;
    for (i, v) in trace.values().iter().enumerate() {
        w.write_record([format!("{:.4}", trace.time(i)), format!("{v:.9}")])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Motion parameters: one row per volume, six numeric columns, optional header.
/// Returns the six columns.
pub fn read_motion_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut rdr = open(path, false)?;
    let mut cols = vec![Vec::new(); 6];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| table_err(path, e.to_string()))?;
        if i == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let row = parse_row(path, i + 1, &rec)?;
        if row.len() != 6 {
            return Err(table_err(path, format!("line {}: expected 6 columns, found {}", i + 1, row.len())));
        }
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    if cols[0].is_empty() {
        return Err(table_err(path, "no motion rows"));
    }
    Ok(cols)
}

/// Writes a table with a header row; every row must have the header's width.
pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| table_err(path, e.to_string()))?;
    let io = |e: csv::Error| table_err(path, e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "row of width {} for a {}-column table",
                r.len(),
                header.len()
            )));
        }
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a header-bearing CSV into (header, rows of strings).
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let path = path.as_ref();
    let mut rdr = open(path, true)?;
    let header = rdr
        .headers()
        .map_err(|e| table_err(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let rows = rdr
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_owned).collect())
                .map_err(|e| table_err(path, e.to_string()))
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok((header, rows))
}

/// Label → value table as written by `roi-table` (`label,value` header).
pub fn read_label_table(path: impl AsRef<Path>) -> Result<Vec<(u32, f64)>> {
    let path = path.as_ref();
    let (header, rows) = read_csv(path)?;
    if header.len() < 2 {
        return Err(table_err(path, "expected `label,value` columns"));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let label = r[0]
                .parse::<u32>()
                .map_err(|_| table_err(path, format!("line {}: bad label `{}`", i + 2, r[0])))?;
            let value = r[1]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| table_err(path, format!("line {}: bad value `{}`", i + 2, r[1])))?;
            Ok((label, value))
        })
        .collect()
}
