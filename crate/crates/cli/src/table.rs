//! CSV serialization of sweep rows.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sweep::Row;

pub const HEADER: [&str; 11] = [
    "sweep_param",
    "value",
    "method",
    "gamma",
    "mql1",
    "mql2",
    "blocking_prob",
    "throughput",
    "loss_rate",
    "stable",
    "error",
];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Malformed { row: usize, msg: String },
}

/// Formats like C's `%.17g`: 17 significant digits with trailing zeros
/// removed, exponent form below 1e-5 or from 1e17 up.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let digits = (16 - exp) as usize;
    strip_zeros(&format!("{x:.digits$}")).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(fmt_g17).unwrap_or_default()
}

pub fn write_rows<W: Write>(w: W, rows: &[Row]) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(HEADER)?;
    for r in rows {
        out.write_record([
            r.sweep_param.clone(),
            fmt_g17(r.value),
            r.method.clone(),
            cell(r.gamma),
            cell(r.mql1),
            cell(r.mql2),
            cell(r.blocking_prob),
            cell(r.throughput),
            cell(r.loss_rate),
            r.stable.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<(), CsvError> {
    let file = std::fs::File::create(path).map_err(|source| CsvError::Io { path: path.to_path_buf(), source })?;
    write_rows(std::io::BufWriter::new(file), rows)?;
    Ok(())
}

pub fn to_string(rows: &[Row]) -> String {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

fn parse_cell(s: &str, row: usize, col: &str) -> Result<Option<f64>, CsvError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| CsvError::Malformed { row, msg: format!("bad number `{s}` in {col}") })
}

pub fn read_rows<R: Read>(r: R) -> Result<Vec<Row>, CsvError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(HEADER) {
        return Err(CsvError::Malformed { row: 0, msg: format!("unexpected header {:?}", headers) });
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let num = |i: usize| parse_cell(&rec[i], row, HEADER[i]);
        let stable = match &rec[9] {
            "true" => true,
            "false" => false,
            other => return Err(CsvError::Malformed { row, msg: format!("bad stable flag `{other}`") }),
        };
        rows.push(Row {
            sweep_param: rec[0].to_string(),
            value: num(1)?.ok_or_else(|| CsvError::Malformed { row, msg: "missing value".into() })?,
            method: rec[2].to_string(),
            gamma: num(3)?,
            mql1: num(4)?,
            mql2: num(5)?,
            blocking_prob: num(6)?,
            throughput: num(7)?,
            loss_rate: num(8)?,
            stable,
            error: Some(rec[10].to_string()).filter(|e| !e.is_empty()),
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>, CsvError> {
    let file = std::fs::File::open(path).map_err(|source| CsvError::Io { path: path.to_path_buf(), source })?;
    read_rows(file)
}
