//! CSV ingestion and locale-independent serialization.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::CliError;

/// Reads the named columns of a CSV file with a header row. Other columns
/// (such as a leading date) are ignored.
pub fn load_csv(path: &Path, variables: &[String]) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let cols = variables
        .iter()
        .map(|v| {
            headers
                .iter()
                .position(|h| h.trim() == v)
                .ok_or_else(|| CliError::Data(format!("{}: no column named {v:?}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        // header is line 1
        let line = idx + 2;
        let record = record.map_err(|e| CliError::Data(format!("row {line}: {e}")))?;
        for (&c, name) in cols.iter().zip(variables) {
            let cell = record.get(c).unwrap_or("").trim();
            if cell.is_empty() {
                return Err(CliError::Data(format!("row {line}, column {name}: empty cell")));
            }
            let x: f64 = cell
                .parse()
                .map_err(|_| CliError::Data(format!("row {line}, column {name}: cannot parse {cell:?}")))?;
            if !x.is_finite() {
                return Err(CliError::Data(format!("row {line}, column {name}: non-finite value")));
            }
            values.push(x);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Data(format!("{}: no observations", path.display())));
    }
    Ok(DMatrix::from_row_slice(rows, variables.len(), &values))
}

/// Log differences of the selected columns. The first `num_seasons` rows are
/// dropped from every column so that the sample still starts in season 1.
pub fn diff_log(data: &DMatrix<f64>, columns: &[usize], num_seasons: usize) -> Result<DMatrix<f64>, CliError> {
    if data.nrows() <= num_seasons {
        return Err(CliError::Data("too few rows to difference".into()));
    }
    for &c in columns {
        if let Some(r) = data.column(c).iter().position(|&x| x <= 0.0) {
            return Err(CliError::Data(format!("row {}, column {}: log of a non-positive value", r + 2, c + 1)));
        }
    }
    let rows = data.nrows() - num_seasons;
    Ok(DMatrix::from_fn(rows, data.ncols(), |r, c| {
        let t = r + num_seasons;
        if columns.contains(&c) {
            data[(t, c)].ln() - data[(t - 1, c)].ln()
        } else {
            data[(t, c)]
        }
    }))
}

/// Round-trip representation of a float: 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON whose floats carry 17 significant digits.
struct ExactFloats<'a>(PrettyFormatter<'a>);

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(writer)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Data(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, to_json(value)?.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes a CSV with LF line endings from pre-formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    write_file(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 123456.789, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn json_uses_exact_floats() {
        let s = to_json(&vec![0.1f64, 2.0]).unwrap();
        assert!(s.contains("1.0000000000000001e-1"));
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.1, 2.0]);
    }

    #[test]
    fn diff_log_keeps_alignment() {
        let data = DMatrix::from_row_slice(4, 2, &[1.0, 5.0, 2.0, 6.0, 4.0, 7.0, 8.0, 8.0]);
        let out = diff_log(&data, &[0], 2).unwrap();
        assert_eq!(out.nrows(), 2);
        assert!((out[(0, 0)] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(out[(1, 1)], 8.0);
    }
}
