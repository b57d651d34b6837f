//! CSV formats: grouped data files, square matrices and solver traces.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use fairgm::{GraphEstimate, GroupedDataset, Mat};

use crate::error::CliError;

/// A data file after parsing, before validation.
pub struct RawData {
    pub features: Vec<String>,
    pub labels: Vec<String>,
    pub values: Mat,
}

pub fn read_data(path: &Path, group_col: &str) -> Result<RawData, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        .clone();
    let gi = headers.iter().position(|h| h == group_col).ok_or_else(|| {
        CliError::input(format!("{}: no group column '{group_col}'", path.display()))
    })?;
    let features: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != gi)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut labels = Vec::new();
    let mut flat = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        for (i, field) in rec.iter().enumerate() {
            if i == gi {
                labels.push(field.to_string());
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    CliError::input(format!(
                        "{}: row {}: '{field}' is not a number",
                        path.display(),
                        line + 2
                    ))
                })?;
                flat.push(v);
            }
        }
    }
    let p = features.len();
    let values = Mat::from_row_slice(labels.len(), p, &flat);
    Ok(RawData {
        features,
        labels,
        values,
    })
}

/// Rescales every column to zero mean and unit sample variance.
pub fn standardize(values: &mut Mat) -> Result<(), CliError> {
    let n = values.nrows();
    if n < 2 {
        return Err(CliError::input("standardization needs at least two rows"));
    }
    for (j, mut col) in values.column_iter_mut().enumerate() {
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if !(var > 0.0) {
            return Err(CliError::input(format!(
                "column {} is constant and cannot be standardized",
                j + 1
            )));
        }
        let sd = var.sqrt();
        col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
    Ok(())
}

pub fn write_data(path: &Path, ds: &GroupedDataset, group_col: &str) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::io)?;
    let mut header = vec![group_col.to_string()];
    header.extend((1..=ds.n_features()).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(CliError::io)?;
    let data = ds.data();
    for (i, &g) in ds.group_of_row().iter().enumerate() {
        let mut rec = vec![ds.labels()[g].clone()];
        rec.extend(data.row(i).iter().map(|v| fmt_num(*v)));
        w.write_record(&rec).map_err(CliError::io)?;
    }
    w.flush().map_err(CliError::io)?;
    Ok(())
}

/// Round-trip-safe scientific notation.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 && v.is_sign_positive() {
        "0".to_string()
    } else if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn write_matrix(path: &Path, m: &Mat) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path).map_err(CliError::io)?);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
        writeln!(out, "{}", line.join(",")).map_err(CliError::io)?;
    }
    out.flush().map_err(CliError::io)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Mat, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    CliError::input(format!("{}: '{f}' is not a number", path.display()))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let p = rows.len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(CliError::input(format!(
            "{}: not a square matrix",
            path.display()
        )));
    }
    Ok(Mat::from_row_iterator(p, p, rows.into_iter().flatten()))
}

/// Off-diagonal support of an estimate as a 0/1 matrix.
pub fn adjacency(m: &Mat) -> Mat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        if i != j && m[(i, j)] != 0.0 {
            1.0
        } else {
            0.0
        }
    })
}

/// One row per trace record: `iter, F_1..F_M, delta, rho_1..rho_M, ell, residual, step_norm, rejected`.
pub fn write_trace(path: &Path, est: &GraphEstimate) -> Result<(), CliError> {
    let m = est.trace.first().map_or(0, |r| r.objectives.len());
    let mut w = csv::Writer::from_path(path).map_err(CliError::io)?;
    let mut header = vec!["iter".to_string()];
    header.extend((1..=m).map(|k| format!("F_{k}")));
    header.push("delta".into());
    header.extend((1..=m).map(|k| format!("rho_{k}")));
    header.extend(["ell", "residual", "step_norm", "rejected"].map(String::from));
    w.write_record(&header).map_err(CliError::io)?;
    for r in &est.trace {
        let mut rec = vec![r.iter.to_string()];
        rec.extend(r.objectives.iter().map(|v| fmt_num(*v)));
        rec.push(r.delta_total.map(fmt_num).unwrap_or_default());
        rec.extend((0..m).map(|k| r.rho.get(k).map(|v| fmt_num(*v)).unwrap_or_default()));
        rec.extend([
            fmt_num(r.ell),
            fmt_num(r.residual),
            fmt_num(r.step_norm),
            r.rejected.to_string(),
        ]);
        w.write_record(&rec).map_err(CliError::io)?;
    }
    w.flush().map_err(CliError::io)?;
    Ok(())
}

/// Objective columns of a trace file, one vector per row.
pub fn read_trace_objectives(path: &Path) -> Result<Vec<(usize, Vec<f64>)>, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("F_"))
        .map(|(i, _)| i)
        .collect();
    let iter_col = headers.iter().position(|h| h == "iter");
    if cols.is_empty() || iter_col.is_none() {
        return Err(CliError::input(format!(
            "{}: missing iter or F_k columns",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let parse = |i: usize| -> Result<f64, CliError> {
            rec[i].parse().map_err(|_| {
                CliError::input(format!("{}: '{}' is not a number", path.display(), &rec[i]))
            })
        };
        let it = rec[iter_col.unwrap()].parse().map_err(|_| {
            CliError::input(format!(
                "{}: bad iteration '{}'",
                path.display(),
                &rec[iter_col.unwrap()]
            ))
        })?;
        out.push((
            it,
            cols.iter()
                .map(|&i| parse(i))
                .collect::<Result<Vec<_>, _>>()?,
        ));
    }
    Ok(out)
}
