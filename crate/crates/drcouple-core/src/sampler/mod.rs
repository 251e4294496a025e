//! Posterior draws for the outcome and propensity parameter blocks.
//!
//! The two blocks are sampled independently: nothing here ever reads the
//! outcome to draw propensity coefficients or vice versa, which is what makes
//! the later coupling step meaningful.
//!
//! Routing: a Gaussian prior sends the Gaussian-linear outcome to exact
//! conjugate draws and the logistic models to adaptive random-walk
//! Metropolis; a horseshoe prior sends both to the Gibbs samplers.

mod conjugate;
mod horseshoe;
mod metropolis;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::{validate, Dataset};
use crate::error::{Error, Result, Warning};
use crate::linalg::Mat;
use crate::model::{DesignSpec, OutcomeFamily, OutcomeModelSpec, PriorSpec, PropensityModelSpec};

pub use conjugate::conjugate_posterior_moments;
pub use horseshoe::sample_horseshoe_posterior;

/// Which parameter block a draw set holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlock {
    /// Propensity-score coefficients.
    Alpha,
    /// Outcome-regression coefficients (plus noise variance when present).
    Beta,
}

/// MCMC knobs shared by the Metropolis and Gibbs samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Iterations discarded before collection.
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in state (exact samplers ignore this).
    pub thin: usize,
    /// Acceptance rate targeted by proposal-scale adaptation.
    pub target_accept: f64,
    /// Iterations per adaptation batch during burn-in.
    pub adapt_batch: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { burn_in: 5000, thin: 5, target_accept: 0.3, adapt_batch: 50 }
    }
}

/// A bag of posterior draws for one parameter block with per-draw log-weights
/// (zero at creation; reweighting steps update them).
#[derive(Debug, Clone)]
pub struct DrawSet {
    block: ParamBlock,
    draws: Mat,
    log_weights: Vec<f64>,
    param_names: Vec<String>,
    seed: u64,
    warnings: Vec<Warning>,
}

impl DrawSet {
    pub fn new(
        block: ParamBlock,
        draws: Mat,
        param_names: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        if draws.rows() < 2 {
            return Err(Error::Domain("a draw set needs at least 2 draws".into()));
        }
        if !draws.is_finite() {
            return Err(Error::Domain("non-finite posterior draw".into()));
        }
        if param_names.len() != draws.cols() {
            return Err(Error::Dimension("parameter names do not match draw width".into()));
        }
        let s = draws.rows();
        Ok(DrawSet {
            block,
            draws,
            log_weights: vec![0.0; s],
            param_names,
            seed,
            warnings: Vec::new(),
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.draws.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.draws.rows() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.draws.cols()
    }

    #[inline]
    pub fn block(&self) -> ParamBlock {
        self.block
    }

    #[inline]
    pub fn draws(&self) -> &Mat {
        &self.draws
    }

    #[inline]
    pub fn draw(&self, s: usize) -> &[f64] {
        self.draws.row(s)
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    pub(crate) fn push_warning(&mut self, w: Warning) {
        crate::error::push_warning(&mut self.warnings, w);
    }

    /// Replaces the log-weights (used by sensitivity reweighting).
    pub fn set_log_weights(&mut self, lw: Vec<f64>) -> Result<()> {
        if lw.len() != self.len() {
            return Err(Error::Dimension("log-weight length != draw count".into()));
        }
        if lw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite log-weight".into()));
        }
        self.log_weights = lw;
        Ok(())
    }

    /// Normalized weights via a log-sum-exp shift; sums to 1.
    pub fn normalized_weights(&self) -> Vec<f64> {
        normalize_log_weights(&self.log_weights)
    }

    /// Posterior mean of each parameter column (respecting weights).
    pub fn posterior_means(&self) -> Vec<f64> {
        let w = self.normalized_weights();
        let mut out = vec![0.0; self.dim()];
        for s in 0..self.len() {
            let row = self.draws.row(s);
            for (o, v) in out.iter_mut().zip(row) {
                *o += w[s] * v;
            }
        }
        out
    }
}

/// Exponentiates shifted log-weights and normalizes them to a simplex.
pub fn normalize_log_weights(lw: &[f64]) -> Vec<f64> {
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = lw.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

fn require_valid(d: &Dataset) -> Result<()> {
    let report = validate(d);
    if !report.ok {
        let first = report
            .issues
            .iter()
            .find(|(s, _)| *s == crate::data::Severity::Error)
            .map(|(_, m)| m.clone())
            .unwrap_or_default();
        return Err(Error::Domain(first));
    }
    Ok(())
}

/// Draws `s` samples from the outcome-model posterior.
///
/// Gaussian-linear with a Gaussian prior uses exact conjugate
/// normal-inverse-gamma draws; the squared-loss pseudo-likelihood is exactly
/// Gaussian and sampled directly; the logistic outcome uses adaptive
/// random-walk Metropolis. A horseshoe prior routes to the Gibbs sampler.
pub fn sample_outcome_posterior(
    d: &Dataset,
    spec: &OutcomeModelSpec,
    s: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<DrawSet> {
    require_valid(d)?;
    spec.check(d)?;
    if s < 2 {
        return Err(Error::Domain("need at least 2 draws".into()));
    }
    match (spec.family, spec.prior) {
        (OutcomeFamily::GaussianLinear, PriorSpec::Gaussian { variance }) => {
            conjugate::sample_gaussian_linear(d, spec, variance, s, seed)
        }
        (OutcomeFamily::GeneralBayesSquaredLoss, PriorSpec::Gaussian { variance }) => {
            conjugate::sample_general_bayes(d, spec, variance, s, seed)
        }
        (OutcomeFamily::BernoulliLogistic, PriorSpec::Gaussian { variance }) => {
            let design = spec.design_matrix(d);
            let y = d.y().to_vec();
            for (i, v) in y.iter().enumerate() {
                if *v != 0.0 && *v != 1.0 {
                    return Err(Error::Domain(alloc::format!(
                        "logistic outcome needs 0/1 responses, found {v} at row {i}"
                    )));
                }
            }
            let names = spec.param_names(d);
            metropolis::sample_logistic(design, y, variance, names, ParamBlock::Beta, s, seed, cfg)
        }
        (OutcomeFamily::GaussianLinear, PriorSpec::Horseshoe) => {
            horseshoe::sample_linear_horseshoe(d, spec, s, seed, cfg)
        }
        (OutcomeFamily::BernoulliLogistic, PriorSpec::Horseshoe) => {
            horseshoe::sample_logistic_horseshoe_outcome(d, spec, s, seed, cfg)
        }
        (OutcomeFamily::GeneralBayesSquaredLoss, PriorSpec::Horseshoe) => Err(Error::Domain(
            "horseshoe prior is not supported for the squared-loss pseudo-likelihood".into(),
        )),
    }
}

/// Draws `s` samples from the propensity-model posterior (logistic
/// regression) by adaptive random-walk Metropolis, or by
/// Metropolis-within-Gibbs under a horseshoe prior.
pub fn sample_propensity_posterior(
    d: &Dataset,
    spec: &PropensityModelSpec,
    s: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<DrawSet> {
    require_valid(d)?;
    spec.check(d)?;
    if s < 2 {
        return Err(Error::Domain("need at least 2 draws".into()));
    }
    match spec.prior {
        PriorSpec::Gaussian { variance } => {
            let design = spec.design_matrix(d);
            let y: Vec<f64> = d.a().iter().map(|v| f64::from(*v)).collect();
            let names = spec.param_names(d);
            metropolis::sample_logistic(design, y, variance, names, ParamBlock::Alpha, s, seed, cfg)
        }
        PriorSpec::Horseshoe => horseshoe::sample_logistic_horseshoe_propensity(d, spec, s, seed, cfg),
    }
}

/// Default full-covariate specs used by the block-level horseshoe entry
/// point and by the confounder-selection pipeline.
pub(crate) fn default_specs(d: &Dataset) -> (OutcomeModelSpec, PropensityModelSpec) {
    let mut outcome = OutcomeModelSpec::gaussian_linear(DesignSpec::all(d));
    outcome.prior = PriorSpec::Horseshoe;
    let ps = PropensityModelSpec {
        design: DesignSpec::all(d),
        prior: PriorSpec::Horseshoe,
    };
    (outcome, ps)
}
