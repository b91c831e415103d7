//! Delimited numeric input: one observation per row, comma- or whitespace-separated.

use std::fs;
use std::path::Path;

use batchuq::{Error, Result, SampleSeries};

/// Parsed table before column selection.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub header: Option<Vec<String>>,
    pub width: usize,
    /// Row-major values.
    pub values: Vec<f64>,
}

impl DataTable {
    pub fn rows(&self) -> usize {
        self.values.len().checked_div(self.width).unwrap_or(0)
    }

    /// Resolve a column by 1-based index or header name.
    pub fn column_index(&self, sel: &str) -> Result<usize> {
        let sel = sel.trim();
        if let Ok(i) = sel.parse::<usize>() {
            if i == 0 || i > self.width {
                return Err(Error::Data(format!("column {i} out of range 1..={}", self.width)));
            }
            return Ok(i - 1);
        }
        self.header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == sel))
            .ok_or_else(|| Error::Data(format!("no column named '{sel}'")))
    }

    /// Keep `columns` (all if empty) in the given order.
    pub fn select(&self, columns: &[String]) -> Result<SampleSeries> {
        let idx: Vec<usize> = if columns.is_empty() {
            (0..self.width).collect()
        } else {
            columns.iter().map(|c| self.column_index(c)).collect::<Result<_>>()?
        };
        let mut out = Vec::with_capacity(self.rows() * idx.len());
        for row in self.values.chunks_exact(self.width) {
            out.extend(idx.iter().map(|&j| row[j]));
        }
        SampleSeries::from_rows_flat(out, idx.len()).map_err(|e| Error::Data(e.to_string()))
    }
}

fn split(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Parse delimited text. A first row that is not entirely numeric is taken as a header.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_delimited(text: &str) -> Result<DataTable> {
    let mut header = None;
    let mut width = 0;
    let mut values = Vec::new();
    let mut first = true;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split(line);
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        if first {
            first = false;
            width = fields.len();
            if parsed.is_none() {
                header = Some(fields.iter().map(|s| s.to_string()).collect());
                continue;
            }
        }
        if fields.len() != width {
            return Err(Error::Data(format!(
                "line {}: expected {width} fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let row = parsed.ok_or_else(|| Error::Data(format!("line {}: non-numeric field", lineno + 1)))?;
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("line {}: non-finite value {bad}", lineno + 1)));
        }
        values.extend(row);
    }
    if values.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    Ok(DataTable { header, width, values })
}

pub fn read_delimited(path: &Path) -> Result<DataTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_delimited(&text)
}
