//! Strict CSV ingestion and writing.
//!
//! The format is deliberately narrow: UTF-8, a header row, one unit per row,
//! comma separators, '.' decimal points, no quoting. Parse failures name the
//! offending row and column. Missing values are rejected, not imputed.

use std::fs;
use std::path::Path;

use drcouple_core::data::Dataset;
use drcouple_core::linalg::Mat;
use drcouple_core::sampler::DrawSet;
use drcouple_core::tilt::HistoryRecord;

use crate::error::CliError;

/// Reads a dataset from CSV. `covariate_cols = None` takes every column that
/// is not the outcome or the treatment, in file order.
pub fn load_dataset(
    path: &Path,
    outcome_col: &str,
    treatment_col: &str,
    covariate_cols: Option<&[String]>,
) -> Result<Dataset, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::data(format!("{} is empty", path.display())))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names.iter().any(|n| n.is_empty()) {
        return Err(CliError::data("header contains an empty column name".to_string()));
    }
    let find = |col: &str| -> Result<usize, CliError> {
        let hits: Vec<usize> =
            names.iter().enumerate().filter(|(_, n)| **n == col).map(|(i, _)| i).collect();
        match hits.len() {
            0 => Err(CliError::data(format!("column '{col}' not found in header"))),
            1 => Ok(hits[0]),
            _ => Err(CliError::data(format!("column '{col}' appears more than once"))),
        }
    };
    let y_idx = find(outcome_col)?;
    let a_idx = find(treatment_col)?;
    if y_idx == a_idx {
        return Err(CliError::config("outcome and treatment columns must differ".to_string()));
    }
    let cov_idx: Vec<usize> = match covariate_cols {
        Some(cols) => cols.iter().map(|c| find(c)).collect::<Result<_, _>>()?,
        None => (0..names.len()).filter(|i| *i != y_idx && *i != a_idx).collect(),
    };
    if cov_idx.contains(&y_idx) || cov_idx.contains(&a_idx) {
        return Err(CliError::config(
            "covariate columns overlap the outcome or treatment column".to_string(),
        ));
    }

    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut x_rows: Vec<f64> = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row_no = line_no; // header was line 0, so this is the 1-based data row
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != names.len() {
            return Err(CliError::data(format!(
                "row {row_no}: expected {} cells, found {}",
                names.len(),
                cells.len()
            )));
        }
        let parse = |idx: usize| -> Result<f64, CliError> {
            let cell = cells[idx];
            let v: f64 = cell.parse().map_err(|_| {
                CliError::data(format!(
                    "row {row_no}, column '{}': cannot parse '{cell}' as a number",
                    names[idx]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::data(format!(
                    "row {row_no}, column '{}': non-finite value '{cell}'",
                    names[idx]
                )));
            }
            Ok(v)
        };
        y.push(parse(y_idx)?);
        let av = parse(a_idx)?;
        if av == 0.0 {
            a.push(0u8);
        } else if av == 1.0 {
            a.push(1u8);
        } else {
            return Err(CliError::data(format!(
                "row {row_no}: treatment value {av} is outside {{0,1}}"
            )));
        }
        for &c in &cov_idx {
            x_rows.push(parse(c)?);
        }
    }
    let n = y.len();
    let p = cov_idx.len();
    let x = Mat::from_rows(n, p, x_rows);
    let column_names = cov_idx.iter().map(|&i| names[i].to_string()).collect();
    Dataset::new(y, a, x, column_names, None).map_err(crate::error::from_core)
}

/// Formats a float with 17 significant digits so reading it back is
/// bit-exact.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the dataset back out in the same schema the loader reads.
pub fn write_dataset(path: &Path, d: &Dataset) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("y,a");
    for name in d.column_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..d.n() {
        out.push_str(&fmt_f64(d.y()[i]));
        out.push(',');
        out.push_str(if d.a()[i] == 1 { "1" } else { "0" });
        for j in 0..d.p() {
            out.push(',');
            out.push_str(&fmt_f64(d.x().get(i, j)));
        }
        out.push('\n');
    }
    fs::write(path, out)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Persists posterior draws for audit: one draw per row, parameter columns
/// plus the log-weight.
pub fn write_drawset(path: &Path, draws: &DrawSet) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&draws.param_names().join(","));
    out.push_str(",log_weight\n");
    for s in 0..draws.len() {
        let row = draws.draw(s);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(*v));
        }
        out.push(',');
        out.push_str(&fmt_f64(draws.log_weights()[s]));
        out.push('\n');
    }
    fs::write(path, out)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Convergence history for plotting: t, lambda, mean_moment, ess.
pub fn write_history(path: &Path, history: &[HistoryRecord]) -> Result<(), CliError> {
    let mut out = String::from("t,lambda,mean_moment,ess,event\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{:?}\n",
            h.t, h.lambda, h.mean_moment, h.ess, h.event
        ));
    }
    fs::write(path, out)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}
