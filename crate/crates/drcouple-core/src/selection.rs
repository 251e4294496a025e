//! High-dimensional confounder selection with a coupled re-tilt.
//!
//! Step 1 draws horseshoe posteriors for both blocks on standardized
//! covariates and keeps the covariates whose propensity coefficients have
//! posterior-mean magnitude at or above the threshold (the intercept is
//! always retained and never thresholded). Step 2 refits the propensity
//! posterior on the selected columns and re-tilts on the selected-covariate
//! moment; outcome coefficients outside the selection are frozen through the
//! SMC smoothing, riding along with their resampled lineage.

use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::{standardize_covariates, validate, Dataset};
use crate::error::{Error, Result, Warning};
use crate::estimator::{ate_from_particles, summarize, AteSummary};
use crate::model::{DesignSpec, OutcomeModelSpec, PriorSpec, PropensityModelSpec};
use crate::moment::{MomentEvaluator, MomentSpec};
use crate::rng::{derive, streams};
use crate::sampler::{
    sample_outcome_posterior, sample_propensity_posterior, DrawSet, SamplerConfig,
};
use crate::tilt::{solve_lambda_smc_masked, HistoryRecord, TiltConfig};

/// Confounder-selection configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    /// Posterior-mean magnitude at or above which a covariate is kept.
    pub threshold: f64,
    pub tilt: TiltConfig,
    pub sampler: SamplerConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            threshold: 0.01,
            tilt: TiltConfig::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

impl SelectionConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::Domain("selection threshold must be positive".into()));
        }
        self.tilt.check()
    }
}

/// Covariates whose propensity-coefficient posterior means have magnitude at
/// or above `threshold`. Returns dataset column indices in design order; the
/// intercept is excluded from thresholding.
pub fn select_confounders(
    alpha_draws: &DrawSet,
    ps_spec: &PropensityModelSpec,
    threshold: f64,
) -> Result<Vec<usize>> {
    if !(threshold > 0.0) {
        return Err(Error::Domain("selection threshold must be positive".into()));
    }
    if alpha_draws.is_empty() {
        return Err(Error::Domain("empty draw set".into()));
    }
    let offset = usize::from(ps_spec.design.intercept);
    if alpha_draws.dim() != ps_spec.n_coef() {
        return Err(Error::Dimension("draw width != propensity coefficient count".into()));
    }
    let means = alpha_draws.posterior_means();
    let selected: Vec<usize> = ps_spec
        .design
        .covariates
        .iter()
        .enumerate()
        .filter(|(pos, _)| means[offset + pos].abs() >= threshold)
        .map(|(_, col)| *col)
        .collect();
    if selected.is_empty() {
        return Err(Error::EmptySelection { threshold });
    }
    Ok(selected)
}

/// Full selection report.
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub threshold: f64,
    /// Selected dataset column indices.
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    pub dropped_names: Vec<String>,
    pub ate: AteSummary,
    pub lambda: f64,
    pub tilt_ess: f64,
    pub history: Vec<HistoryRecord>,
    pub warnings: Vec<Warning>,
}

/// Confounder selection with posterior coupling: horseshoe posteriors on all
/// covariates, thresholding of the propensity coefficients, a propensity
/// refit on the selected columns, then the SMC tilt on the selected-covariate
/// moment with the unselected outcome coordinates frozen. The G-formula uses
/// the full outcome coefficient vector.
pub fn coupled_selection(
    d: &Dataset,
    cfg: &SelectionConfig,
    draws: usize,
    seed: u64,
) -> Result<SelectionOutcome> {
    cfg.check()?;
    let report = validate(d);
    if !report.ok {
        return Err(Error::Domain("dataset failed validation".into()));
    }
    // Standardize so the fixed threshold is scale-meaningful.
    let all_cols: Vec<usize> = (0..d.p()).collect();
    let d_std = standardize_covariates(d, &all_cols)?;

    let mut outcome_spec = OutcomeModelSpec::gaussian_linear(DesignSpec::all(&d_std));
    outcome_spec.prior = PriorSpec::Horseshoe;
    let ps_spec = PropensityModelSpec {
        design: DesignSpec::all(&d_std),
        prior: PriorSpec::Horseshoe,
    };

    let alpha_full = sample_propensity_posterior(
        &d_std,
        &ps_spec,
        draws,
        derive(seed, streams::PROPENSITY_SAMPLER),
        &cfg.sampler,
    )?;
    let beta = sample_outcome_posterior(
        &d_std,
        &outcome_spec,
        draws,
        derive(seed, streams::OUTCOME_SAMPLER),
        &cfg.sampler,
    )?;

    let selected = select_confounders(&alpha_full, &ps_spec, cfg.threshold)?;
    coupled_selection_with(d, &d_std, &outcome_spec, &ps_spec, &beta, selected, cfg, draws, seed)
}

/// Step 2 with an externally fixed selection (exposed so tests can force a
/// deliberately wrong subset).
#[allow(clippy::too_many_arguments)]
pub fn coupled_selection_with(
    d: &Dataset,
    d_std: &Dataset,
    outcome_spec: &OutcomeModelSpec,
    ps_spec: &PropensityModelSpec,
    beta: &DrawSet,
    selected: Vec<usize>,
    cfg: &SelectionConfig,
    draws: usize,
    seed: u64,
) -> Result<SelectionOutcome> {
    if selected.is_empty() {
        return Err(Error::EmptySelection { threshold: cfg.threshold });
    }
    // Refit the propensity posterior on the selected columns only.
    let ps_reduced = PropensityModelSpec {
        design: DesignSpec {
            covariates: selected.clone(),
            intercept: ps_spec.design.intercept,
        },
        prior: ps_spec.prior,
    };
    let alpha_s = sample_propensity_posterior(
        d_std,
        &ps_reduced,
        draws,
        derive(seed, streams::SELECTION),
        &cfg.sampler,
    )?;

    // Outcome coefficients for unselected covariates are frozen in the tilt.
    let frozen_beta: Vec<usize> = outcome_spec
        .design
        .covariates
        .iter()
        .enumerate()
        .filter(|(_, col)| !selected.contains(col))
        .map(|(pos, _)| {
            usize::from(outcome_spec.design.intercept)
                + usize::from(outcome_spec.include_treatment_main_effect)
                + pos
        })
        .collect();

    let moment = MomentSpec::Selected { selected: selected.clone() };
    let evaluator = MomentEvaluator::new(d_std, outcome_spec, ps_spec, &moment)?;
    let mut tilt_cfg = cfg.tilt.clone();
    tilt_cfg.seed = derive(seed, streams::TILT);
    let ps = solve_lambda_smc_masked(&alpha_s, beta, &evaluator, &tilt_cfg, &frozen_beta)?;
    let ate = summarize(&ate_from_particles(&ps, d_std, outcome_spec)?, 0.95)?;

    let selected_names: Vec<String> = selected
        .iter()
        .map(|j| d.column_names()[*j].clone())
        .collect();
    let dropped_names: Vec<String> = (0..d.p())
        .filter(|j| !selected.contains(j))
        .map(|j| d.column_names()[j].clone())
        .collect();
    let mut warnings = alpha_s.warnings().to_vec();
    warnings.extend_from_slice(beta.warnings());
    warnings.extend_from_slice(&ps.warnings);
    Ok(SelectionOutcome {
        threshold: cfg.threshold,
        selected,
        selected_names,
        dropped_names,
        ate,
        lambda: ps.lambda,
        tilt_ess: ps.ess(),
        history: ps.history.clone(),
        warnings,
    })
}
