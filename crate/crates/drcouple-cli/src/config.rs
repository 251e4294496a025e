//! Run configuration: one JSON file per run, with command-line flags taking
//! precedence over file values. The seed is mandatory everywhere; nothing is
//! ever seeded from the clock.

use std::path::PathBuf;

use serde::Deserialize;

use drcouple_core::data::Dataset;
use drcouple_core::model::{
    DesignSpec, OutcomeFamily, OutcomeModelSpec, PriorSpec, PropensityModelSpec,
};
use drcouple_core::sampler::SamplerConfig;
use drcouple_core::sensitivity::{SensitivityMode, SensitivitySpec, XiPrior, XiScale};
use drcouple_core::simulate::{Method, MisspecStyle, ScenarioSpec};
use drcouple_core::tilt::{TiltConfig, TiltMethod};

use crate::error::CliError;

fn default_draws() -> usize {
    20_000
}

/// Data-section of the config: column roles.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub outcome_col: Option<String>,
    pub treatment_col: Option<String>,
    pub covariate_cols: Option<Vec<String>>,
}

/// Model-section of the config.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub outcome_family: String,
    pub learning_rate: f64,
    /// Covariate names for the propensity design (None = all).
    pub ps_cols: Option<Vec<String>>,
    /// Covariate names for the outcome design (None = all).
    pub outcome_cols: Option<Vec<String>>,
    pub prior: String,
    pub prior_variance: Option<f64>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            outcome_family: "gaussian-linear".into(),
            learning_rate: 1.0,
            ps_cols: None,
            outcome_cols: None,
            prior: "gaussian".into(),
            prior_variance: None,
            draws: default_draws(),
            burn_in: SamplerConfig::default().burn_in,
            thin: SamplerConfig::default().thin,
        }
    }
}

/// Tilt-section of the config.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TiltSection {
    pub method: String,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
    pub smoothing: f64,
    pub lambda_bar: f64,
    pub steps: usize,
    /// None = pruning off.
    pub prune: Option<f64>,
}

impl Default for TiltSection {
    fn default() -> Self {
        let d = TiltConfig::default();
        TiltSection {
            method: "smc".into(),
            tol_abs: d.tol_abs,
            tol_rel: d.tol_rel,
            max_iter: d.max_iter,
            smoothing: d.smoothing,
            lambda_bar: d.lambda_bar,
            steps: d.steps,
            prune: None,
        }
    }
}

impl TiltSection {
    pub fn to_core(&self, seed: u64) -> Result<TiltConfig, CliError> {
        let method = match self.method.as_str() {
            "smc" => TiltMethod::Smc,
            "is" => TiltMethod::Importance,
            other => return Err(CliError::config(format!("unknown tilt method '{other}'"))),
        };
        let cfg = TiltConfig {
            method,
            tol_abs: self.tol_abs,
            tol_rel: self.tol_rel,
            max_iter: self.max_iter,
            smoothing: self.smoothing,
            lambda_bar: self.lambda_bar,
            steps: self.steps,
            prune_keep_fraction: self.prune.unwrap_or(1.0),
            seed,
            ..TiltConfig::default()
        };
        cfg.check().map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }
}

/// Scenario-section for `simulate`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub n: usize,
    pub replications: usize,
    pub ps_correct: bool,
    pub outcome_correct: bool,
    pub misspec_style: String,
    pub add_irrelevant: usize,
    pub draws: usize,
    pub prune_keep_fraction: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            n: 500,
            replications: 200,
            ps_correct: true,
            outcome_correct: true,
            misspec_style: "drop-to-x1".into(),
            add_irrelevant: 0,
            draws: 5000,
            prune_keep_fraction: 0.8,
        }
    }
}

/// Sensitivity prior as a JSON fragment, e.g.
/// `{"family":"triangular","lo":0,"hi":0.5,"mode":0.5}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum XiPriorConfig {
    Point { value: f64 },
    Triangular { lo: f64, hi: f64, mode: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl XiPriorConfig {
    pub fn to_core(&self) -> Result<XiPrior, CliError> {
        let prior = match *self {
            XiPriorConfig::Point { value } => XiPrior::Point(value),
            XiPriorConfig::Triangular { lo, hi, mode } => XiPrior::Triangular { lo, hi, mode },
            XiPriorConfig::Uniform { lo, hi } => XiPrior::Uniform { lo, hi },
        };
        prior.check().map_err(|e| CliError::config(e.to_string()))?;
        Ok(prior)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivitySection {
    pub g: Option<XiPriorConfig>,
    pub inner_samples: usize,
    pub mode: String,
    /// Shift scale for binary outcomes: "link" (default) or "probability".
    pub xi_scale: String,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        SensitivitySection {
            g: None,
            inner_samples: 200,
            mode: "per-unit".into(),
            xi_scale: "link".into(),
        }
    }
}

impl SensitivitySection {
    pub fn to_core(&self) -> Result<SensitivitySpec, CliError> {
        let prior = self
            .g
            .as_ref()
            .ok_or_else(|| CliError::config("sensitivity prior 'g' is required"))?
            .to_core()?;
        let mode = match self.mode.as_str() {
            "per-unit" => SensitivityMode::PerUnit,
            "pooled" => SensitivityMode::Pooled,
            other => return Err(CliError::config(format!("unknown sensitivity mode '{other}'"))),
        };
        let scale = match self.xi_scale.as_str() {
            "link" => XiScale::Link,
            "probability" => XiScale::Probability,
            other => return Err(CliError::config(format!("unknown xi scale '{other}'"))),
        };
        let spec = SensitivitySpec { prior, inner_samples: self.inner_samples, mode, scale };
        spec.check().map_err(|e| CliError::config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionSection {
    pub threshold: f64,
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection { threshold: 0.01 }
    }
}

/// The whole config file.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub format: Option<String>,
    pub methods: Option<Vec<String>>,
    /// Persist the posterior draw sets next to the fit report.
    pub dump_draws: bool,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub tilt: TiltSection,
    pub scenario: ScenarioSection,
    pub sensitivity: SensitivitySection,
    pub selection: SelectionSection,
}

impl RunConfig {
    pub fn from_file(path: &PathBuf) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("malformed config {}: {e}", path.display())))
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            burn_in: self.model.burn_in,
            thin: self.model.thin,
            ..SamplerConfig::default()
        }
    }

    pub fn outcome_family(&self) -> Result<OutcomeFamily, CliError> {
        match self.model.outcome_family.as_str() {
            "gaussian-linear" => Ok(OutcomeFamily::GaussianLinear),
            "bernoulli-logistic" => Ok(OutcomeFamily::BernoulliLogistic),
            "general-bayes" => Ok(OutcomeFamily::GeneralBayesSquaredLoss),
            other => Err(CliError::config(format!("unknown outcome family '{other}'"))),
        }
    }

    fn prior(&self, default_variance: f64) -> Result<PriorSpec, CliError> {
        match self.model.prior.as_str() {
            "gaussian" => Ok(PriorSpec::Gaussian {
                variance: self.model.prior_variance.unwrap_or(default_variance),
            }),
            "horseshoe" => Ok(PriorSpec::Horseshoe),
            other => Err(CliError::config(format!("unknown prior '{other}'"))),
        }
    }

    fn resolve_cols(
        d: &Dataset,
        cols: &Option<Vec<String>>,
    ) -> Result<DesignSpec, CliError> {
        match cols {
            None => Ok(DesignSpec::all(d)),
            Some(names) => {
                let mut idx = Vec::with_capacity(names.len());
                for name in names {
                    let j = d.column_index(name).ok_or_else(|| {
                        CliError::config(format!("unknown covariate column '{name}'"))
                    })?;
                    idx.push(j);
                }
                Ok(DesignSpec::with_columns(idx))
            }
        }
    }

    /// Builds the model specs against a loaded dataset.
    pub fn model_specs(
        &self,
        d: &Dataset,
    ) -> Result<(OutcomeModelSpec, PropensityModelSpec), CliError> {
        let family = self.outcome_family()?;
        let outcome_design = Self::resolve_cols(d, &self.model.outcome_cols)?;
        let ps_design = Self::resolve_cols(d, &self.model.ps_cols)?;
        let mut outcome = match family {
            OutcomeFamily::GaussianLinear => OutcomeModelSpec::gaussian_linear(outcome_design),
            OutcomeFamily::BernoulliLogistic => {
                OutcomeModelSpec::bernoulli_logistic(outcome_design)
            }
            OutcomeFamily::GeneralBayesSquaredLoss => {
                OutcomeModelSpec::general_bayes(outcome_design, self.model.learning_rate)
            }
        };
        if self.model.prior == "horseshoe" || self.model.prior_variance.is_some() {
            outcome.prior = self.prior(match family {
                OutcomeFamily::GaussianLinear => 1e4,
                _ => 100.0,
            })?;
        }
        let ps = PropensityModelSpec { design: ps_design, prior: self.prior(100.0)? };
        outcome.check(d).map_err(|e| CliError::config(e.to_string()))?;
        ps.check(d).map_err(|e| CliError::config(e.to_string()))?;
        Ok((outcome, ps))
    }

    pub fn methods(&self, default: &[Method]) -> Result<Vec<Method>, CliError> {
        match &self.methods {
            None => Ok(default.to_vec()),
            Some(names) => names
                .iter()
                .map(|n| {
                    Method::parse(n)
                        .ok_or_else(|| CliError::config(format!("unknown method '{n}'")))
                })
                .collect(),
        }
    }

    pub fn scenario(&self, seed: u64) -> Result<ScenarioSpec, CliError> {
        let style = match self.scenario.misspec_style.as_str() {
            "drop-to-x1" => MisspecStyle::DropToX1,
            "kang-schafer" => MisspecStyle::KangSchafer,
            other => {
                return Err(CliError::config(format!("unknown misspecification style '{other}'")))
            }
        };
        let mut spec = ScenarioSpec::new(self.scenario.n, self.scenario.replications, seed);
        spec.ps_correct = self.scenario.ps_correct;
        spec.outcome_correct = self.scenario.outcome_correct;
        spec.misspec_style = style;
        spec.add_irrelevant = self.scenario.add_irrelevant;
        spec.draws = self.scenario.draws;
        spec.prune_keep_fraction = self.scenario.prune_keep_fraction;
        spec.sampler = self.sampler();
        spec.tilt = self.tilt.to_core(0)?;
        spec.methods = self.methods(&[
            Method::Proposed,
            Method::GFormula,
            Method::FreqDr,
            Method::Saarela,
        ])?;
        spec.check().map_err(|e| CliError::config(e.to_string()))?;
        Ok(spec)
    }
}
