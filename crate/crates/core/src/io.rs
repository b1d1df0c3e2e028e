//! CSV tables and matrix files.
//!
//! Reals are written with Rust's shortest round-trip formatting, so parsing a
//! written file recovers every `f64` bit for bit.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Real(f64),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => format_real(*v),
        }
    }
}

/// Shortest round-trip text for `v`, switching to exponent form for very
/// large or very small magnitudes.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// A header plus rows of equal width.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_owned(),
        source,
    }
}

pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    table.write_to(file).map_err(csv_err(path))
}

/// Writes a matrix as headerless CSV, one row per line.
pub fn write_matrix_csv(a: &Matrix, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for i in 0..a.rows() {
        w.write_record(a.row(i).iter().map(|&v| format_real(v)))
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a headerless numeric CSV into a matrix.
pub fn load_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err(path))?;
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(format!("'{field}' is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(format!(
                    "ragged row: {} fields, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Matrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let a = Matrix::from_row_major(3, 2, vec![0.1, -1e-300, 1.0 / 3.0, 2048.0, 5e-324, -0.0])
            .unwrap();
        write_matrix_csv(&a, &path).unwrap();
        let b = load_matrix_csv(&path).unwrap();
        assert_eq!(a.rows(), b.rows());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn ragged_rows_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "1,2,3\n4,5\n").unwrap();
        let err = load_matrix_csv(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn empty_and_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_matrix_csv(&path), Err(Error::EmptyInput)));
        std::fs::write(&path, "1,x\n").unwrap();
        assert!(matches!(load_matrix_csv(&path), Err(Error::Parse { line: 1, .. })));
        let missing = dir.path().join("missing.csv");
        let err = load_matrix_csv(&missing).unwrap_err();
        assert!(err.to_string().contains("missing.csv"));
    }

    #[test]
    fn table_rendering() {
        let mut t = Table::new(&["mode", "n", "value"]);
        t.push(vec!["rn".into(), 3usize.into(), 0.1.into()]);
        t.push(vec!["sr".into(), 4usize.into(), 2048.0.into()]);
        assert_eq!(t.to_csv_string(), "mode,n,value\nrn,3,0.1\nsr,4,2048\n");
        assert_eq!(format_real(-1e-300), "-1e-300");
        assert_eq!(format_real(0.00048828125), "0.00048828125");
        assert_eq!(format_real(3.0e-6), "3e-6");
        assert_eq!(format_real(65504.0), "65504");
    }
}
