//! Command-line front end for doubly robust Bayesian ATE estimation via
//! posterior coupling.
//!
//! Exit codes: 1 configuration error, 2 data error, 3 numerical or
//! convergence failure. Structured errors go to stderr as JSON, stdout
//! carries only the report path and a one-line summary.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use drcouple_cli::commands::{cmd_fit, cmd_select, cmd_sensitivity, cmd_simulate, CmdOutput};
use drcouple_cli::config::{RunConfig, XiPriorConfig};
use drcouple_cli::error::CliError;

#[derive(Parser)]
#[command(
    name = "drcouple",
    about = "Doubly robust Bayesian treatment-effect estimation via posterior coupling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for all randomness (mandatory here or in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: number of cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Report format (json | csv); commands emit both where applicable.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Clone)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input CSV with a header row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Outcome column name (default y).
    #[arg(long)]
    outcome_col: Option<String>,
    /// Treatment column name (default a).
    #[arg(long)]
    treatment_col: Option<String>,
    /// Outcome family: gaussian-linear | bernoulli-logistic | general-bayes.
    #[arg(long)]
    outcome_family: Option<String>,
    /// Comma-separated covariates for the propensity design.
    #[arg(long, value_delimiter = ',')]
    ps_cols: Option<Vec<String>>,
    /// Comma-separated covariates for the outcome design.
    #[arg(long, value_delimiter = ',')]
    outcome_cols: Option<Vec<String>>,
    /// Tilting solver: is | smc.
    #[arg(long)]
    tilt: Option<String>,
    /// Prune keep-fraction; bare `--prune` uses 0.8.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.8")]
    prune: Option<f64>,
    /// Posterior draws.
    #[arg(long)]
    draws: Option<usize>,
    /// Methods to run (comma separated).
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    /// Prior on coefficients: gaussian | horseshoe.
    #[arg(long)]
    prior: Option<String>,
    /// Also persist the posterior draw sets as CSV for audit.
    #[arg(long)]
    dump_draws: bool,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sample size per replication.
    #[arg(long)]
    n: Option<usize>,
    /// Number of replications.
    #[arg(long)]
    replications: Option<usize>,
    /// Propensity model correctly specified.
    #[arg(long)]
    ps_correct: Option<bool>,
    /// Outcome model correctly specified.
    #[arg(long)]
    outcome_correct: Option<bool>,
    /// Misspecification style: drop-to-x1 | kang-schafer.
    #[arg(long)]
    misspec_style: Option<String>,
    /// Extra irrelevant covariates to append.
    #[arg(long)]
    add_irrelevant: Option<usize>,
    /// Posterior draws per replication.
    #[arg(long)]
    draws: Option<usize>,
    /// Methods to run (comma separated).
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    /// Also emit the long-format per-replication CSV.
    #[arg(long)]
    long: bool,
    /// Write one generated benchmark dataset to this CSV and exit.
    #[arg(long)]
    emit_data: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SensitivityArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    outcome_col: Option<String>,
    #[arg(long)]
    treatment_col: Option<String>,
    #[arg(long)]
    outcome_family: Option<String>,
    /// Sensitivity prior as JSON, e.g.
    /// {"family":"triangular","lo":0,"hi":0.5,"mode":0.5}
    #[arg(long)]
    xi: Option<String>,
    /// Inner Monte Carlo samples for integrating the prior.
    #[arg(long)]
    inner_samples: Option<usize>,
    /// Grid sharing: per-unit | pooled.
    #[arg(long)]
    mode: Option<String>,
    /// Shift scale for binary outcomes: link | probability.
    #[arg(long)]
    xi_scale: Option<String>,
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Args, Clone)]
struct SelectArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    outcome_col: Option<String>,
    #[arg(long)]
    treatment_col: Option<String>,
    /// Posterior-mean magnitude threshold for keeping a covariate.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit ATE estimators on a CSV dataset.
    Fit(FitArgs),
    /// Run the replication benchmark and write the metrics table.
    Simulate(SimulateArgs),
    /// Unmeasured-confounding sensitivity analysis.
    Sensitivity(SensitivityArgs),
    /// High-dimensional confounder selection with a coupled re-tilt.
    Select(SelectArgs),
}

fn base_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    if common.format.is_some() {
        cfg.format = common.format.clone();
    }
    Ok(cfg)
}

fn run() -> Result<CmdOutput, CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Fit(args) => {
            let mut cfg = base_config(&args.common)?;
            if args.input.is_some() {
                cfg.input = args.input;
            }
            if let Some(v) = args.outcome_col {
                cfg.data.outcome_col = Some(v);
            }
            if let Some(v) = args.treatment_col {
                cfg.data.treatment_col = Some(v);
            }
            if let Some(v) = args.outcome_family {
                cfg.model.outcome_family = v;
            }
            if args.ps_cols.is_some() {
                cfg.model.ps_cols = args.ps_cols;
            }
            if args.outcome_cols.is_some() {
                cfg.model.outcome_cols = args.outcome_cols;
            }
            if let Some(v) = args.tilt {
                cfg.tilt.method = v;
            }
            if args.prune.is_some() {
                cfg.tilt.prune = args.prune;
            }
            if let Some(v) = args.draws {
                cfg.model.draws = v;
            }
            if args.method.is_some() {
                cfg.methods = args.method;
            }
            if let Some(v) = args.prior {
                cfg.model.prior = v;
            }
            if args.dump_draws {
                cfg.dump_draws = true;
            }
            cmd_fit(&cfg)
        }
        Command::Simulate(args) => {
            let mut cfg = base_config(&args.common)?;
            if let Some(path) = &args.emit_data {
                let seed = cfg
                    .seed
                    .ok_or_else(|| CliError::config("a seed (--seed) is required"))?;
                let n = args.n.unwrap_or(cfg.scenario.n);
                drcouple_cli::commands::emit_benchmark_csv(path, n, seed)?;
                return Ok(CmdOutput {
                    report_path: path.clone(),
                    summary_line: format!("{}: benchmark dataset with n={n}", path.display()),
                });
            }
            if let Some(v) = args.n {
                cfg.scenario.n = v;
            }
            if let Some(v) = args.replications {
                cfg.scenario.replications = v;
            }
            if let Some(v) = args.ps_correct {
                cfg.scenario.ps_correct = v;
            }
            if let Some(v) = args.outcome_correct {
                cfg.scenario.outcome_correct = v;
            }
            if let Some(v) = args.misspec_style {
                cfg.scenario.misspec_style = v;
            }
            if let Some(v) = args.add_irrelevant {
                cfg.scenario.add_irrelevant = v;
            }
            if let Some(v) = args.draws {
                cfg.scenario.draws = v;
            }
            if args.method.is_some() {
                cfg.methods = args.method;
            }
            cmd_simulate(&cfg, args.long)
        }
        Command::Sensitivity(args) => {
            let mut cfg = base_config(&args.common)?;
            if args.input.is_some() {
                cfg.input = args.input;
            }
            if let Some(v) = args.outcome_col {
                cfg.data.outcome_col = Some(v);
            }
            if let Some(v) = args.treatment_col {
                cfg.data.treatment_col = Some(v);
            }
            if let Some(v) = args.outcome_family {
                cfg.model.outcome_family = v;
            }
            if let Some(text) = args.xi {
                let parsed: XiPriorConfig = serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("malformed --xi JSON: {e}")))?;
                cfg.sensitivity.g = Some(parsed);
            }
            if let Some(v) = args.inner_samples {
                cfg.sensitivity.inner_samples = v;
            }
            if let Some(v) = args.mode {
                cfg.sensitivity.mode = v;
            }
            if let Some(v) = args.xi_scale {
                cfg.sensitivity.xi_scale = v;
            }
            if let Some(v) = args.draws {
                cfg.model.draws = v;
            }
            cmd_sensitivity(&cfg)
        }
        Command::Select(args) => {
            let mut cfg = base_config(&args.common)?;
            if args.input.is_some() {
                cfg.input = args.input;
            }
            if let Some(v) = args.outcome_col {
                cfg.data.outcome_col = Some(v);
            }
            if let Some(v) = args.treatment_col {
                cfg.data.treatment_col = Some(v);
            }
            if let Some(v) = args.threshold {
                cfg.selection.threshold = v;
            }
            if let Some(v) = args.draws {
                cfg.model.draws = v;
            }
            cmd_select(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(output) => {
            println!("{}", output.summary_line);
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.kind.exit_code() as u8)
        }
    }
}
