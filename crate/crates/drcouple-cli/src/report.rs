//! Report writers: JSON summaries and the two CSV layouts (metrics table,
//! long per-replication format).

use std::path::Path;

use serde_json::{json, Value};

use drcouple_core::error::Warning;
use drcouple_core::estimator::AteSummary;
use drcouple_core::simulate::SimulationReport;

use crate::error::CliError;

pub fn summary_json(
    method: &str,
    summary: &AteSummary,
    n: usize,
    seed: u64,
) -> Value {
    json!({
        "method": method,
        "mean": summary.mean,
        "ci": [summary.ci_low, summary.ci_high],
        "level": summary.level,
        "ess": summary.ess,
        "n": n,
        "seed": seed,
    })
}

pub fn warnings_json(warnings: &[Warning]) -> Value {
    Value::Array(warnings.iter().map(|w| Value::String(w.to_string())).collect())
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::numeric(format!("serialization failed: {e}")))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// The benchmark table: Method, ABias, ESE, RMSE, CP, AvL (plus bookkeeping).
pub fn metrics_csv(report: &SimulationReport) -> String {
    let mut out = String::from("method,abias,ese,rmse,cp,avl,used,failures\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.method.name(),
            row.abias,
            row.ese,
            row.rmse,
            row.cp,
            row.avl,
            row.used,
            row.failures
        ));
    }
    out
}

/// Long format for external plotting: one row per replication and method.
pub fn long_csv(report: &SimulationReport) -> String {
    let mut out = String::from("method,seed,estimate,ci_low,ci_high\n");
    for rec in &report.per_replication {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.method.name(),
            rec.seed,
            rec.estimate,
            rec.ci_low,
            rec.ci_high
        ));
    }
    out
}

pub fn simulation_json(report: &SimulationReport) -> Value {
    json!({
        "truth": report.truth,
        "rows": report.rows.iter().map(|r| json!({
            "method": r.method.name(),
            "abias": r.abias,
            "ese": if r.ese.is_nan() { Value::Null } else { json!(r.ese) },
            "rmse": r.rmse,
            "cp": r.cp,
            "avl": r.avl,
            "used": r.used,
            "failures": r.failures,
        })).collect::<Vec<_>>(),
        "per_replication": report.per_replication.iter().map(|rec| json!({
            "method": rec.method.name(),
            "seed": rec.seed,
            "estimate": rec.estimate,
            "ci": [rec.ci_low, rec.ci_high],
        })).collect::<Vec<_>>(),
    })
}
