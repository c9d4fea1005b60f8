//! CSV and TOML file formats.
//!
//! CSV files are comma separated with a header row, `.` decimals and LF line
//! endings. Numbers are written with the shortest representation that
//! round-trips, so reruns produce identical bytes.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use csv::{ReaderBuilder, Terminator, WriterBuilder};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::TidyRow;

/// Layout of a data matrix on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// One row per variable, one column per observation.
    #[default]
    VarsRows,
    /// One row per observation.
    ObsRows,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::VarsRows => "vars-rows",
            Orientation::ObsRows => "obs-rows",
        })
    }
}

impl FromStr for Orientation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vars-rows" => Ok(Orientation::VarsRows),
            "obs-rows" => Ok(Orientation::ObsRows),
            _ => Err(Error::Parse(format!(
                "unknown orientation `{s}` (expected vars-rows or obs-rows)"
            ))),
        }
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(w)
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes `m` with labelled rows and columns (`{row_prefix}1`, `{col_prefix}1`, ...).
pub fn write_labeled<W: Write>(
    w: W,
    m: &DMatrix<f64>,
    corner: &str,
    row_prefix: &str,
    col_prefix: &str,
) -> Result<()> {
    let mut wr = writer(w);
    let mut header = vec![corner.to_string()];
    header.extend((1..=m.ncols()).map(|c| format!("{col_prefix}{c}")));
    wr.write_record(&header)?;
    let mut rec = Vec::with_capacity(m.ncols() + 1);
    for r in 0..m.nrows() {
        rec.clear();
        rec.push(format!("{row_prefix}{}", r + 1));
        rec.extend(m.row(r).iter().map(|v| num(*v)));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes a `p x n` data matrix.
pub fn write_data_matrix<W: Write>(w: W, x: &DMatrix<f64>, orientation: Orientation) -> Result<()> {
    match orientation {
        Orientation::VarsRows => write_labeled(w, x, "variable", "v", "o"),
        Orientation::ObsRows => write_labeled(w, &x.transpose(), "observation", "o", "v"),
    }
}

/// Writes a `k x n` score matrix.
pub fn write_scores<W: Write>(w: W, z: &DMatrix<f64>, orientation: Orientation) -> Result<()> {
    match orientation {
        Orientation::VarsRows => write_labeled(w, z, "component", "c", "o"),
        Orientation::ObsRows => write_labeled(w, &z.transpose(), "observation", "o", "c"),
    }
}

/// Numeric table read from CSV with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub labels: Option<Vec<String>>,
    pub values: DMatrix<f64>,
}

/// Reads a numeric CSV with a header row. The first column is treated as row
/// labels when the first data row's first field is not a number. Errors name
/// the 1-based line and column.
pub fn read_table<R: Read>(r: R) -> Result<Table> {
    let mut rd = ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse("CSV input is empty (no header row)".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut has_labels: Option<bool> = None;
    for (idx, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = idx + 2;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        let labelled = *has_labels
            .get_or_insert_with(|| rec.get(0).is_some_and(|f| f.trim().parse::<f64>().is_err()));
        let start = usize::from(labelled);
        if labelled {
            labels.push(rec[0].trim().to_string());
        }
        let mut row = Vec::with_capacity(rec.len() - start);
        for (c, field) in rec.iter().enumerate().skip(start) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "line {line}, column {}: cannot parse `{field}` as a number",
                    c + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "line {line}, column {}: non-finite value `{field}`",
                    c + 1
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse(
            "CSV input has a header but no data rows".into(),
        ));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::Parse("CSV input has no numeric columns".into()));
    }
    let values = DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]);
    Ok(Table {
        header,
        labels: has_labels.unwrap_or(false).then_some(labels),
        values,
    })
}

pub fn read_table_path(path: &Path) -> Result<Table> {
    let f = File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    read_table(f).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Reads a data matrix and returns it as `p x n` (variables in rows).
pub fn read_data_matrix(path: &Path, orientation: Orientation) -> Result<DMatrix<f64>> {
    let t = read_table_path(path)?;
    Ok(match orientation {
        Orientation::VarsRows => t.values,
        Orientation::ObsRows => t.values.transpose(),
    })
}

/// Reads a single numeric column (an optional label column is allowed).
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let t = read_table_path(path)?;
    if t.values.ncols() != 1 {
        return Err(Error::Parse(format!(
            "{}: expected one numeric column, found {}",
            path.display(),
            t.values.ncols()
        )));
    }
    Ok(t.values.iter().copied().collect())
}

/// Writes any serialisable value as TOML.
pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        num(v)
    }
}

/// Writes tidy rows; `reference_name` titles the analytic column.
pub fn write_tidy<W: Write>(w: W, rows: &[TidyRow], reference_name: &str) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record([
        "study",
        "series",
        "series_value",
        "x",
        "x_value",
        "statistic",
        "count",
        "mean",
        "sd",
        "sd_se",
        "q025",
        "q500",
        "q975",
        reference_name,
        "flag",
    ])?;
    for r in rows {
        let s = &r.summary;
        wr.write_record([
            r.study.clone(),
            r.series.clone(),
            opt(r.series_value),
            r.x.clone(),
            opt(r.x_value),
            r.statistic.clone(),
            s.count.to_string(),
            opt(s.mean),
            opt(s.sd),
            opt(s.sd_se),
            opt(s.q025),
            opt(s.q500),
            opt(s.q975),
            r.reference.map(opt).unwrap_or_default(),
            r.flag().to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes a header and rows of plain records.
pub fn write_records<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(header)?;
    for r in rows {
        wr.write_record(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Formats a float the way every CSV writer in this module does.
pub fn format_f64(v: f64) -> String {
    opt(v)
}
