//! Numeric CSV in and out.
//!
//! Input: comma-separated, decimal point only, one optional header row that
//! is recognised by containing a field that does not parse as a number.
//! Output floats use 17 significant digits so every value round-trips.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::CliError;

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|msg| CliError::input(format!("{}: {msg}", path.display())))
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("row {}: {e}", idx + 1))?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Result<f64, usize>> = record
            .iter()
            .enumerate()
            .map(|(c, field)| parse_number(field).ok_or(c))
            .collect();
        if idx == 0 && parsed.iter().any(Result::is_err) {
            continue; // header
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(format!("row {line}: expected {w} columns, found {}", record.len()));
            }
            _ => {}
        }
        for (c, v) in parsed.into_iter().enumerate() {
            let v = v.map_err(|_| {
                format!(
                    "row {line}, column {}: cannot parse {:?} as a number",
                    c + 1,
                    &record[c]
                )
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.ok_or("no data rows")?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Plain decimal or exponent notation; rejects `inf`, `nan` and empty fields.
fn parse_number(field: &str) -> Option<f64> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b)) {
        return None;
    }
    field.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Accumulates CSV text; fields never need quoting here.
pub struct CsvOut {
    buf: String,
}

impl CsvOut {
    pub fn new(header: &[String]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self { buf }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            let _ = write!(self.buf, "{f}");
        }
        self.buf.push('\n');
    }

    pub fn write(self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.buf).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

pub fn coordinate_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detected_and_skipped() {
        let m = parse_matrix("a,b\n1,2\n3,4e-1\n").unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m[(1, 1)], 0.4);
    }

    #[test]
    fn headerless() {
        let m = parse_matrix("1.5, -2\n3,4\n").unwrap();
        assert_eq!(m[(0, 1)], -2.0);
    }

    #[test]
    fn diagnostics_name_row_and_column() {
        let err = parse_matrix("x,y\n1,2\n3,oops\n").unwrap_err();
        assert!(err.contains("row 3, column 2"), "{err}");
        let err = parse_matrix("1,2\n\n4,5\nx,6\n").unwrap_err();
        assert!(err.contains("row 4, column 1"), "{err}");
        let err = parse_matrix("1,2\n3\n").unwrap_err();
        assert!(err.contains("row 2") && err.contains("expected 2 columns"), "{err}");
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("1,nan\n").is_err());
    }

    #[test]
    fn round_trip_formatting() {
        for v in [0.1, -1e-300, 123456.789, std::f64::consts::PI] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
