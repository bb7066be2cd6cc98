//! Plot-ready CSV and machine-readable JSON for trajectories and schedules.
//!
//! CSV rows are `t,mode,rows,cols,v0,v1,...` with 1-based modes and matrix
//! entries flattened row-major, printed with 17 significant digits.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Mat, MatrixFamily};

pub fn format_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `series[k]` under time label `t_offset + k`.
pub fn write_family_series_csv<W: Write>(mut w: W, series: &[MatrixFamily], t_offset: usize) -> Result<()> {
    let width = series.first().map(|f| f.shape().0 * f.shape().1).unwrap_or(0);
    let mut header = String::from("t,mode,rows,cols");
    for k in 0..width {
        header.push_str(&format!(",v{k}"));
    }
    writeln!(w, "{header}")?;
    for (k, fam) in series.iter().enumerate() {
        let (r, c) = fam.shape();
        for (i, m) in fam.iter().enumerate() {
            let mut line = format!("{},{},{r},{c}", t_offset + k, i + 1);
            for row in 0..r {
                for col in 0..c {
                    line.push(',');
                    line.push_str(&format_full(m[(row, col)]));
                }
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

/// Reads back what [`write_family_series_csv`] wrote, ordered by `t`.
pub fn read_family_series_csv<R: Read>(r: R) -> Result<Vec<MatrixFamily>> {
    let mut rows: Vec<(usize, usize, Mat)> = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Config(format!("csv line {}: {msg}", lineno + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(bad("expected t,mode,rows,cols,..."));
        }
        let int = |s: &str| s.trim().parse::<usize>().map_err(|_| bad("non-integer index"));
        let (t, mode, nr, nc) = (int(fields[0])?, int(fields[1])?, int(fields[2])?, int(fields[3])?);
        if fields.len() != 4 + nr * nc || mode == 0 {
            return Err(bad("entry count does not match rows*cols"));
        }
        let vals = fields[4..]
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("non-numeric entry")))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((t, mode - 1, Mat::from_row_slice(nr, nc, &vals)));
    }
    rows.sort_by_key(|(t, mode, _)| (*t, *mode));
    let mut out = Vec::new();
    let mut k = 0;
    while k < rows.len() {
        let t = rows[k].0;
        let mut mats = Vec::new();
        while k < rows.len() && rows[k].0 == t {
            if rows[k].1 != mats.len() {
                return Err(Error::Config(format!("csv: missing mode {} at t={t}", mats.len() + 1)));
            }
            mats.push(rows[k].2.clone());
            k += 1;
        }
        out.push(MatrixFamily::new(mats)?);
    }
    Ok(out)
}

/// Nested row-major arrays for JSON output.
pub fn family_to_nested(f: &MatrixFamily) -> Vec<Vec<Vec<f64>>> {
    f.iter().map(mat_to_nested).collect()
}

pub fn mat_to_nested(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

pub fn nested_to_mat(rows: &[Vec<f64>]) -> Result<Mat> {
    let nr = rows.len();
    let nc = rows.first().map(Vec::len).unwrap_or(0);
    if nr == 0 || nc == 0 {
        return Err(Error::Config("matrix must have at least one row and one column".into()));
    }
    if let Some(r) = rows.iter().position(|r| r.len() != nc) {
        return Err(Error::Config(format!(
            "matrix row {} has {} entries, expected {nc}",
            r + 1,
            rows[r].len()
        )));
    }
    Ok(Mat::from_fn(nr, nc, |r, c| rows[r][c]))
}

pub fn nested_to_family(mats: &[Vec<Vec<f64>>]) -> Result<MatrixFamily> {
    MatrixFamily::new(mats.iter().map(|m| nested_to_mat(m)).collect::<Result<Vec<_>>>()?)
}

/// JSON document for a schedule or trajectory: `series[t][mode][row][col]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SeriesDocument {
    pub name: String,
    pub t_offset: usize,
    pub series: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl SeriesDocument {
    pub fn new(name: &str, series: &[MatrixFamily], t_offset: usize) -> Self {
        Self {
            name: name.to_string(),
            t_offset,
            series: series.iter().map(family_to_nested).collect(),
            optimal_cost: None,
            metadata: serde_json::Map::new(),
        }
    }

    pub fn families(&self) -> Result<Vec<MatrixFamily>> {
        self.series.iter().map(|f| nested_to_family(f)).collect()
    }
}
