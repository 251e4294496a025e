//! The four subcommand implementations. Each returns the report path and a
//! one-line summary for stdout; every other diagnostic goes to files.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use drcouple_core::data::validate;
use drcouple_core::estimator::{saarela_bootstrap_dr, summarize};
use drcouple_core::moment::MomentSpec;
use drcouple_core::pipeline::{fit_dr_coupled, fit_gformula};
use drcouple_core::rng::{derive, streams};
use drcouple_core::selection::{coupled_selection, SelectionConfig};
use drcouple_core::sensitivity::sensitivity_ate;
use drcouple_core::simulate::{freq_dr_summary, Method};

use crate::config::RunConfig;
use crate::csv_io::{load_dataset, write_drawset, write_history};
use crate::error::{numeric_from_core, CliError};
use crate::parallel::run_replications_parallel;
use crate::report::{
    long_csv, metrics_csv, simulation_json, summary_json, warnings_json, write_json,
};

pub struct CmdOutput {
    pub report_path: PathBuf,
    pub summary_line: String,
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::config("an output directory (--out) is required"))?;
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn require_seed(cfg: &RunConfig) -> Result<u64, CliError> {
    cfg.seed.ok_or_else(|| CliError::config("a seed (--seed) is required; runs never seed from the clock"))
}

fn load_input(cfg: &RunConfig) -> Result<drcouple_core::data::Dataset, CliError> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::config("an input CSV (--input) is required"))?;
    let outcome_col = cfg.data.outcome_col.as_deref().unwrap_or("y");
    let treatment_col = cfg.data.treatment_col.as_deref().unwrap_or("a");
    let d = load_dataset(input, outcome_col, treatment_col, cfg.data.covariate_cols.as_deref())?;
    let report = validate(&d);
    if !report.ok {
        let msgs: Vec<String> = report.issues.iter().map(|(_, m)| m.clone()).collect();
        return Err(CliError::data(format!("dataset failed validation: {}", msgs.join("; "))));
    }
    Ok(d)
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<CmdOutput, CliError> {
    let seed = require_seed(cfg)?;
    let dir = out_dir(cfg)?;
    let d = load_input(cfg)?;
    let (outcome_spec, ps_spec) = cfg.model_specs(&d)?;
    let sampler = cfg.sampler();
    let methods = cfg.methods(&[Method::Proposed])?;
    let draws = cfg.model.draws;

    if cfg.dump_draws {
        // the same derived stream seeds the pipeline uses, so the audit dump
        // is exactly what the fit consumed
        let sampler_cfg = cfg.sampler();
        let beta = drcouple_core::sampler::sample_outcome_posterior(
            &d,
            &outcome_spec,
            draws,
            derive(seed, streams::OUTCOME_SAMPLER),
            &sampler_cfg,
        )
        .map_err(numeric_from_core)?;
        write_drawset(&dir.join("outcome_draws.csv"), &beta)?;
        let alpha = drcouple_core::sampler::sample_propensity_posterior(
            &d,
            &ps_spec,
            draws,
            derive(seed, streams::PROPENSITY_SAMPLER),
            &sampler_cfg,
        )
        .map_err(numeric_from_core)?;
        write_drawset(&dir.join("propensity_draws.csv"), &alpha)?;
    }

    let mut entries = Vec::new();
    let mut headline: Option<(String, f64)> = None;
    for method in &methods {
        let entry = match method {
            Method::Proposed | Method::ProposedPruned => {
                let mut tilt = cfg.tilt.to_core(0)?;
                if *method == Method::ProposedPruned && tilt.prune_keep_fraction >= 1.0 {
                    tilt.prune_keep_fraction = 0.8;
                }
                let fit = fit_dr_coupled(
                    &d, &outcome_spec, &ps_spec, &MomentSpec::Dr, draws, seed, &sampler, &tilt,
                )
                .map_err(numeric_from_core)?;
                let history_path = dir.join(format!("tilt_history_{}.csv", method.name()));
                write_history(&history_path, &fit.history)?;
                let mut v = summary_json(method.name(), &fit.summary, d.n(), seed);
                v["tilt"] = json!({
                    "lambda": fit.lambda,
                    "ess": fit.tilt_ess,
                    "mean_moment": fit.mean_moment,
                    "clipped_propensities": fit.clipped_evaluations,
                    "history": history_path.display().to_string(),
                    "pruned": tilt.prune_keep_fraction < 1.0,
                });
                v["warnings"] = warnings_json(&fit.warnings);
                headline.get_or_insert((method.name().to_string(), fit.summary.mean));
                v
            }
            Method::GFormula => {
                let s = fit_gformula(&d, &outcome_spec, draws, seed, &sampler)
                    .map_err(numeric_from_core)?;
                headline.get_or_insert((method.name().to_string(), s.mean));
                summary_json(method.name(), &s, d.n(), seed)
            }
            Method::FreqDr => {
                let s = freq_dr_summary(&d, &outcome_spec, &ps_spec)
                    .map_err(numeric_from_core)?;
                headline.get_or_insert((method.name().to_string(), s.mean));
                summary_json(method.name(), &s, d.n(), seed)
            }
            Method::Saarela => {
                let ap = saarela_bootstrap_dr(
                    &d,
                    &outcome_spec,
                    &ps_spec,
                    draws,
                    derive(seed, streams::BOOTSTRAP),
                )
                .map_err(numeric_from_core)?;
                let s = summarize(&ap, 0.95).map_err(numeric_from_core)?;
                let mut v = summary_json(method.name(), &s, d.n(), seed);
                v["warnings"] = warnings_json(&ap.warnings);
                headline.get_or_insert((method.name().to_string(), s.mean));
                v
            }
        };
        entries.push(entry);
    }

    let report_path = dir.join("fit.json");
    write_json(&report_path, &json!({ "n": d.n(), "p": d.p(), "seed": seed, "fits": entries }))?;
    let (name, mean) = headline.unwrap_or(("(none)".into(), f64::NAN));
    Ok(CmdOutput {
        report_path: report_path.clone(),
        summary_line: format!("{}: {} ATE mean {:.4}", report_path.display(), name, mean),
    })
}

pub fn cmd_simulate(cfg: &RunConfig, long: bool) -> Result<CmdOutput, CliError> {
    let seed = require_seed(cfg)?;
    let dir = out_dir(cfg)?;
    let spec = cfg.scenario(seed)?;
    let threads = cfg.threads.unwrap_or_else(default_threads);
    let report = run_replications_parallel(&spec, threads).map_err(numeric_from_core)?;

    let csv_path = dir.join("metrics.csv");
    fs::write(&csv_path, metrics_csv(&report))
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", csv_path.display())))?;
    let json_path = dir.join("report.json");
    write_json(&json_path, &simulation_json(&report))?;
    if long {
        let long_path = dir.join("replications.csv");
        fs::write(&long_path, long_csv(&report))
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", long_path.display())))?;
    }
    let first = report.rows.first();
    let line = match first {
        Some(r) => format!(
            "{}: {} methods x {} replications; {} abias {:.3}",
            csv_path.display(),
            report.rows.len(),
            spec.replications,
            r.method.name(),
            r.abias
        ),
        None => format!("{}: empty report", csv_path.display()),
    };
    Ok(CmdOutput { report_path: csv_path, summary_line: line })
}

pub fn cmd_sensitivity(cfg: &RunConfig) -> Result<CmdOutput, CliError> {
    let seed = require_seed(cfg)?;
    let dir = out_dir(cfg)?;
    let d = load_input(cfg)?;
    let (outcome_spec, ps_spec) = cfg.model_specs(&d)?;
    let sens = cfg.sensitivity.to_core()?;
    let tilt = cfg.tilt.to_core(0)?;
    let fit = sensitivity_ate(
        &d,
        &outcome_spec,
        &ps_spec,
        &sens,
        &tilt,
        &cfg.sampler(),
        cfg.model.draws,
        seed,
    )
    .map_err(numeric_from_core)?;

    let report_path = dir.join("sensitivity.json");
    let mut v = summary_json("sensitivity", &fit.summary, d.n(), seed);
    v["tilt"] = json!({ "lambda": fit.lambda, "ess": fit.tilt_ess });
    v["reweight_ess"] = json!(fit.reweight_ess);
    write_json(&report_path, &v)?;
    Ok(CmdOutput {
        report_path: report_path.clone(),
        summary_line: format!(
            "{}: sensitivity ATE mean {:.4} [{:.4}, {:.4}]",
            report_path.display(),
            fit.summary.mean,
            fit.summary.ci_low,
            fit.summary.ci_high
        ),
    })
}

pub fn cmd_select(cfg: &RunConfig) -> Result<CmdOutput, CliError> {
    let seed = require_seed(cfg)?;
    let dir = out_dir(cfg)?;
    let d = load_input(cfg)?;
    let selection = SelectionConfig {
        threshold: cfg.selection.threshold,
        tilt: cfg.tilt.to_core(0)?,
        sampler: cfg.sampler(),
    };
    selection.check().map_err(|e| CliError::config(e.to_string()))?;
    let out = coupled_selection(&d, &selection, cfg.model.draws, seed)
        .map_err(numeric_from_core)?;

    let report_path = dir.join("selection.json");
    let history_path = dir.join("tilt_history_selection.csv");
    write_history(&history_path, &out.history)?;
    write_json(
        &report_path,
        &json!({
            "threshold": out.threshold,
            "selected": out.selected_names,
            "dropped": out.dropped_names,
            "ate": summary_json("coupled-selection", &out.ate, d.n(), seed),
            "tilt": {
                "lambda": out.lambda,
                "ess": out.tilt_ess,
                "history": history_path.display().to_string(),
            },
            "warnings": warnings_json(&out.warnings),
        }),
    )?;
    Ok(CmdOutput {
        report_path: report_path.clone(),
        summary_line: format!(
            "{}: selected {} of {} covariates; ATE mean {:.4}",
            report_path.display(),
            out.selected.len(),
            d.p(),
            out.ate.mean
        ),
    })
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Writes a generated benchmark dataset (used by `simulate --emit-data`).
pub fn emit_benchmark_csv(path: &Path, n: usize, seed: u64) -> Result<(), CliError> {
    let d = drcouple_core::simulate::generate_kang_schafer(n, seed)
        .map_err(numeric_from_core)?;
    crate::csv_io::write_dataset(path, &d)
}
