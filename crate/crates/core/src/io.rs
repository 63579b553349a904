//! CSV and JSON-lines output helpers. Numbers are written with 17
//! significant digits so files round-trip exactly.

use crate::error::{invalid, Result};
use std::io::Write;
use std::path::Path;

/// Format a float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

/// Write a header row followed by numeric rows.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = writer(path)?;
    if !header.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.write_record(r.iter().map(|v| fmt17(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Write a map whose rows are spatial points and columns output times:
/// header `x, t_0, t_1, ...` (or `x, y, ...` for 2D coordinates).
pub fn write_map(
    path: &Path,
    coord_names: &[&str],
    coords: &[&[f64]],
    times: &[f64],
    columns: &[Vec<f64>],
) -> Result<()> {
    let npts = coords.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != npts) {
        return Err(invalid("map columns must match the coordinate length"));
    }
    let mut header: Vec<String> = coord_names.iter().map(|s| s.to_string()).collect();
    header.extend(times.iter().map(|t| format!("t={}", fmt17(*t))));
    let rows: Vec<Vec<f64>> = (0..npts)
        .map(|i| {
            coords
                .iter()
                .map(|c| c[i])
                .chain(columns.iter().map(|col| col[i]))
                .collect()
        })
        .collect();
    write_table(path, &header, &rows)
}

/// Read a numeric CSV with one header line.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| invalid(format!("bad number in {}: {e}", path.display())))?);
    }
    Ok((header, rows))
}

/// Append-only JSON-lines writer.
pub struct JsonLines {
    file: std::io::BufWriter<std::fs::File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            file: std::io::BufWriter::new(std::fs::File::create(path)?),
        })
    }

    pub fn write<T: serde::Serialize>(&mut self, record: &T) -> Result<()> {
        let s = serde_json::to_string(record).map_err(|e| invalid(e.to_string()))?;
        self.file.write_all(s.as_bytes())?;
        self.file.write_all(b"\n")?;
        self.file.flush()?;
        Ok(())
    }
}
