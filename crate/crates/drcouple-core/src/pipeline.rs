//! End-to-end fit pipelines shared by the CLI and the simulation harness.

use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Result, Warning};
use crate::estimator::{ate_from_draws, ate_from_particles, summarize, AteSummary};
use crate::model::{OutcomeModelSpec, PropensityModelSpec};
use crate::moment::{MomentEvaluator, MomentSpec};
use crate::rng::{derive, streams};
use crate::sampler::{
    sample_outcome_posterior, sample_propensity_posterior, SamplerConfig,
};
use crate::tilt::{solve_lambda, HistoryRecord, TiltConfig};

/// Outcome of a coupled fit: the ATE summary plus tilting diagnostics.
#[derive(Debug, Clone)]
pub struct DrFit {
    pub summary: AteSummary,
    pub lambda: f64,
    pub tilt_ess: f64,
    pub mean_moment: f64,
    pub history: Vec<HistoryRecord>,
    pub warnings: Vec<Warning>,
    pub clipped_evaluations: usize,
}

/// The proposed estimator end to end: independent posteriors, tilting on the
/// doubly robust moment, G-formula summary from the coupled draws.
#[allow(clippy::too_many_arguments)]
pub fn fit_dr_coupled(
    d: &Dataset,
    outcome_spec: &OutcomeModelSpec,
    ps_spec: &PropensityModelSpec,
    moment: &MomentSpec,
    draws: usize,
    seed: u64,
    sampler_cfg: &SamplerConfig,
    tilt_cfg: &TiltConfig,
) -> Result<DrFit> {
    let beta = sample_outcome_posterior(
        d,
        outcome_spec,
        draws,
        derive(seed, streams::OUTCOME_SAMPLER),
        sampler_cfg,
    )?;
    let alpha = sample_propensity_posterior(
        d,
        ps_spec,
        draws,
        derive(seed, streams::PROPENSITY_SAMPLER),
        sampler_cfg,
    )?;
    let evaluator = MomentEvaluator::new(d, outcome_spec, ps_spec, moment)?;
    let mut cfg = tilt_cfg.clone();
    cfg.seed = derive(seed, streams::TILT);
    let ps = solve_lambda(&alpha, &beta, &evaluator, &cfg)?;
    let summary = summarize(&ate_from_particles(&ps, d, outcome_spec)?, 0.95)?;
    let mut warnings = alpha.warnings().to_vec();
    warnings.extend_from_slice(beta.warnings());
    warnings.extend_from_slice(&ps.warnings);
    Ok(DrFit {
        summary,
        lambda: ps.lambda,
        tilt_ess: ps.ess(),
        mean_moment: ps.mean_moment(),
        history: ps.history.clone(),
        warnings,
        clipped_evaluations: ps.clip.clipped,
    })
}

/// The uncoupled Bayesian G-formula baseline.
pub fn fit_gformula(
    d: &Dataset,
    outcome_spec: &OutcomeModelSpec,
    draws: usize,
    seed: u64,
    sampler_cfg: &SamplerConfig,
) -> Result<AteSummary> {
    let beta = sample_outcome_posterior(
        d,
        outcome_spec,
        draws,
        derive(seed, streams::OUTCOME_SAMPLER),
        sampler_cfg,
    )?;
    summarize(&ate_from_draws(&beta, d, outcome_spec)?, 0.95)
}
