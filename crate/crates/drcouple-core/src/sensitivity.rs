//! Unmeasured-confounding sensitivity analysis.
//!
//! The working outcome model gains an additive treatment-arm shift `xi` with
//! prior `g`; posterior draws of the base model are importance-reweighted by
//! the marginal likelihood ratio, integrating `xi` out by Monte Carlo. For
//! the logistic outcome the shift acts on the linear predictor (a log-odds
//! shift), so the reported contrast stays a risk difference.
//!
//! All weight arithmetic runs in log space with a single shift per draw set;
//! the reweighted draws then feed the usual coupling pipeline, whose solvers
//! accept non-uniform initial weights.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{ate_from_particles, summarize, AteSummary};
use crate::model::{OutcomeFamily, OutcomeModelSpec, PropensityModelSpec};
use crate::moment::{MomentEvaluator, MomentSpec};
use crate::rng::{derive, streams};
use crate::sampler::{
    normalize_log_weights, sample_outcome_posterior, sample_propensity_posterior, DrawSet,
    SamplerConfig,
};
use crate::tilt::{effective_sample_size, solve_lambda, TiltConfig};

/// Prior over the sensitivity parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XiPrior {
    Point(f64),
    Triangular { lo: f64, hi: f64, mode: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl XiPrior {
    pub fn check(&self) -> Result<()> {
        match self {
            XiPrior::Point(v) => {
                if !v.is_finite() {
                    return Err(Error::Domain("point mass must be finite".into()));
                }
            }
            XiPrior::Triangular { lo, hi, mode } => {
                if !(lo < hi) || !(mode >= lo && mode <= hi) {
                    return Err(Error::Domain(
                        "triangular prior needs lo < hi and mode inside [lo, hi]".into(),
                    ));
                }
            }
            XiPrior::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::Domain("uniform prior needs lo < hi".into()));
                }
            }
        }
        Ok(())
    }

    /// Inverse-CDF transform of one uniform variate.
    fn inverse_cdf(&self, u: f64) -> f64 {
        match *self {
            XiPrior::Point(v) => v,
            XiPrior::Uniform { lo, hi } => lo + u * (hi - lo),
            XiPrior::Triangular { lo, hi, mode } => {
                let span = hi - lo;
                let cut = (mode - lo) / span;
                if u < cut {
                    lo + (u * span * (mode - lo)).sqrt()
                } else {
                    hi - ((1.0 - u) * span * (hi - mode)).sqrt()
                }
            }
        }
    }
}

/// How the Monte Carlo grid over `xi` is shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityMode {
    /// A fresh `xi` grid per posterior draw.
    PerUnit,
    /// One `xi` grid shared by every posterior draw.
    Pooled,
}

/// Where the shift enters a binary-outcome model. Gaussian models always
/// shift the mean; for logistic models the link scale (a log-odds shift) is
/// the default, with a direct probability shift available behind this flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XiScale {
    Link,
    Probability,
}

/// Sensitivity-analysis configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySpec {
    pub prior: XiPrior,
    /// Inner Monte Carlo sample count for integrating `xi` out.
    pub inner_samples: usize,
    pub mode: SensitivityMode,
    /// Binary-outcome shift scale (ignored by Gaussian models).
    pub scale: XiScale,
}

impl SensitivitySpec {
    pub fn new(prior: XiPrior) -> Self {
        SensitivitySpec {
            prior,
            inner_samples: 200,
            mode: SensitivityMode::PerUnit,
            scale: XiScale::Link,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.prior.check()?;
        if self.inner_samples < 1 {
            return Err(Error::Domain("need at least one inner sample".into()));
        }
        Ok(())
    }
}

/// Inverse-CDF draws from the sensitivity prior.
pub fn sample_sensitivity_param(prior: &XiPrior, seed: u64, count: usize) -> Result<Vec<f64>> {
    prior.check()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    Ok((0..count).map(|_| prior.inverse_cdf(rng.random::<f64>())).collect())
}

/// Per-draw log of the likelihood ratio integrated over one `xi` grid.
///
/// For one draw with coefficient vector `coef` (and noise variance `sigma2`
/// when present), returns `log mean_m exp{ sum_i [f_base_i - f_xi_i(xi_m)] }`.
fn log_ratio_for_draw(
    d: &Dataset,
    spec: &OutcomeModelSpec,
    eta_obs: &[f64],
    draw: &[f64],
    grid: &[f64],
    scale: XiScale,
) -> Result<f64> {
    let k = spec.n_coef();
    let n = d.n();
    match spec.family {
        OutcomeFamily::GaussianLinear | OutcomeFamily::GeneralBayesSquaredLoss => {
            // Quadratic losses collapse to treated residual sums:
            // sum_t [r^2 - (r - xi)^2] * scale = (2 xi sum_t r - n_t xi^2) * scale
            let scale = if spec.family == OutcomeFamily::GaussianLinear {
                let sigma2 = draw[k];
                1.0 / (2.0 * sigma2)
            } else {
                spec.learning_rate
            };
            let mut treated_resid = 0.0;
            let mut n_treated = 0.0;
            for i in 0..n {
                if d.a()[i] == 1 {
                    treated_resid += d.y()[i] - eta_obs[i];
                    n_treated += 1.0;
                }
            }
            let terms: Vec<f64> = grid
                .iter()
                .map(|xi| scale * (2.0 * xi * treated_resid - n_treated * xi * xi))
                .collect();
            Ok(log_mean_exp(&terms))
        }
        OutcomeFamily::BernoulliLogistic => {
            // Only treated units change; xi shifts the linear predictor
            // (log-odds) or, behind the flag, the success probability.
            let mut terms = vec![0.0; grid.len()];
            for i in 0..n {
                if d.a()[i] != 1 {
                    continue;
                }
                let eta = eta_obs[i];
                let y = d.y()[i];
                let base = y * eta - log1pexp(eta);
                for (t, xi) in terms.iter_mut().zip(grid) {
                    let shifted = match scale {
                        XiScale::Link => {
                            let eta_s = eta + xi;
                            y * eta_s - log1pexp(eta_s)
                        }
                        XiScale::Probability => {
                            let p = (crate::model::expit(eta) + xi).clamp(1e-12, 1.0 - 1e-12);
                            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
                        }
                    };
                    *t += shifted - base;
                }
            }
            Ok(log_mean_exp(&terms))
        }
    }
}

#[inline]
fn log1pexp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        0.0
    } else {
        (1.0 + x.exp()).ln()
    }
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    max + (sum / v.len() as f64).ln()
}

/// Importance-reweights outcome draws under the sensitivity prior, writing
/// the new log-weights into a copy of the draw set.
pub fn sensitivity_reweight(
    beta_draws: &DrawSet,
    d: &Dataset,
    spec: &OutcomeModelSpec,
    sens: &SensitivitySpec,
    seed: u64,
) -> Result<DrawSet> {
    sens.check()?;
    spec.check(d)?;
    let design_obs = spec.design_matrix(d);
    let k = spec.n_coef();
    let s = beta_draws.len();

    let pooled_grid = sample_sensitivity_param(&sens.prior, derive(seed, 0xA11), sens.inner_samples)?;
    let mut log_w = Vec::with_capacity(s);
    for idx in 0..s {
        let draw = beta_draws.draw(idx);
        let eta_obs = design_obs.matvec(&draw[..k]);
        let grid = match sens.mode {
            SensitivityMode::Pooled => pooled_grid.clone(),
            SensitivityMode::PerUnit => sample_sensitivity_param(
                &sens.prior,
                derive(seed, 0xB00 + idx as u64),
                sens.inner_samples,
            )?,
        };
        let lr = log_ratio_for_draw(d, spec, &eta_obs, draw, &grid, sens.scale)?;
        if lr.is_nan() {
            return Err(Error::DegenerateReweight(
                "likelihood ratio is undefined; narrow the sensitivity prior".into(),
            ));
        }
        log_w.push(beta_draws.log_weights()[idx] + lr);
    }
    // After the log-sum-exp shift at least one weight is 1; degeneracy means
    // the rest vanished.
    let w = normalize_log_weights(&log_w);
    let ess = effective_sample_size(&w);
    if !ess.is_finite() || ess < 1.5 {
        return Err(Error::DegenerateReweight(alloc::format!(
            "effective sample size {ess:.2}; narrow the sensitivity prior"
        )));
    }
    let mut out = beta_draws.clone();
    // Keep log-weights finite for downstream arithmetic.
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    out.set_log_weights(log_w.iter().map(|v| v - max).collect())?;
    Ok(out)
}

/// Result of the sensitivity pipeline.
#[derive(Debug, Clone)]
pub struct SensitivityFit {
    pub summary: AteSummary,
    pub lambda: f64,
    pub tilt_ess: f64,
    pub reweight_ess: f64,
}

/// Full pipeline under the sensitivity prior: posterior draws, importance
/// reweight, tilting with the reweighted initial weights, then the G-formula
/// summary from the coupled draws.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_ate(
    d: &Dataset,
    outcome_spec: &OutcomeModelSpec,
    ps_spec: &PropensityModelSpec,
    sens: &SensitivitySpec,
    tilt_cfg: &TiltConfig,
    sampler_cfg: &SamplerConfig,
    draws: usize,
    seed: u64,
) -> Result<SensitivityFit> {
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
    let beta_rw =
        sensitivity_reweight(&beta, d, outcome_spec, sens, derive(seed, streams::SENSITIVITY))?;
    let reweight_ess = effective_sample_size(&beta_rw.normalized_weights());

    let evaluator = MomentEvaluator::new(d, outcome_spec, ps_spec, &MomentSpec::Dr)?;
    let mut cfg = tilt_cfg.clone();
    cfg.seed = derive(seed, streams::TILT);
    let ps = solve_lambda(&alpha, &beta_rw, &evaluator, &cfg)?;
    let summary = summarize(&ate_from_particles(&ps, d, outcome_spec)?, 0.95)?;
    Ok(SensitivityFit {
        summary,
        lambda: ps.lambda,
        tilt_ess: ps.ess(),
        reweight_ess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::linalg::Mat;
    use crate::model::DesignSpec;
    use crate::sampler::ParamBlock;
    use alloc::format;
    use alloc::string::String;

    fn names(p: usize) -> Vec<String> {
        (1..=p).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn point_mass_draws_are_constant() {
        let v = sample_sensitivity_param(&XiPrior::Point(0.3), 9, 100).unwrap();
        assert!(v.iter().all(|x| *x == 0.3));
    }

    #[test]
    fn triangular_mean_matches_analytic() {
        // mean = (lo + hi + mode) / 3
        let v = sample_sensitivity_param(
            &XiPrior::Triangular { lo: 0.0, hi: 0.5, mode: 0.5 },
            12,
            1_000_000,
        )
        .unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 1.0 / 3.0).abs() < 0.002, "mean {mean}");

        let v = sample_sensitivity_param(
            &XiPrior::Triangular { lo: -0.5, hi: 0.0, mode: -0.5 },
            12,
            1_000_000,
        )
        .unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean + 1.0 / 3.0).abs() < 0.002, "mean {mean}");
    }

    fn tiny_gaussian_setup() -> (Dataset, OutcomeModelSpec, DrawSet) {
        let d = Dataset::new(
            vec![2.0, 0.5],
            vec![1, 0],
            Mat::from_rows(2, 1, vec![0.0, 0.0]),
            names(1),
            None,
        )
        .unwrap();
        let mut spec = OutcomeModelSpec::gaussian_linear(DesignSpec {
            covariates: vec![],
            intercept: true,
        });
        spec.include_treatment_main_effect = false;
        // two draws: intercept b0, sigma2 = 1
        let draws = Mat::from_rows(2, 2, vec![1.0, 1.0, 0.0, 1.0]);
        let ds = DrawSet::new(ParamBlock::Beta, draws, vec!["intercept".into(), "sigma2".into()], 0)
            .unwrap();
        (d, spec, ds)
    }

    #[test]
    fn point_zero_prior_leaves_weights_equal() {
        let (d, spec, ds) = tiny_gaussian_setup();
        let sens = SensitivitySpec::new(XiPrior::Point(0.0));
        let out = sensitivity_reweight(&ds, &d, &spec, &sens, 5).unwrap();
        let w = out.normalized_weights();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_treated_unit_log_weight_is_half_residual_shift() {
        // log-weight difference = -((r - xi)^2 - r^2)/2 for sigma2 = 1
        let (d, spec, ds) = tiny_gaussian_setup();
        let xi = 0.4;
        let sens = SensitivitySpec::new(XiPrior::Point(xi));
        let out = sensitivity_reweight(&ds, &d, &spec, &sens, 5).unwrap();
        // draw 0: intercept 1 -> treated residual r = 2 - 1 = 1
        // draw 1: intercept 0 -> treated residual r = 2
        let lw = out.log_weights();
        let expected = |r: f64| -(((r - xi) * (r - xi)) - r * r) / 2.0;
        let diff_expected = expected(1.0) - expected(2.0);
        let diff_actual = lw[0] - lw[1];
        assert!(
            (diff_actual - diff_expected).abs() < 1e-12,
            "expected {diff_expected}, got {diff_actual}"
        );
    }

    #[test]
    fn point_mass_ignores_inner_sample_count() {
        let (d, spec, ds) = tiny_gaussian_setup();
        let mut s1 = SensitivitySpec::new(XiPrior::Point(0.2));
        s1.inner_samples = 1;
        let mut s2 = SensitivitySpec::new(XiPrior::Point(0.2));
        s2.inner_samples = 10_000;
        let w1 = sensitivity_reweight(&ds, &d, &spec, &s1, 3).unwrap();
        let w2 = sensitivity_reweight(&ds, &d, &spec, &s2, 4).unwrap();
        assert_eq!(w1.normalized_weights(), w2.normalized_weights());
    }

    #[test]
    fn pooled_and_per_unit_agree_exactly_for_point_mass() {
        let (d, spec, ds) = tiny_gaussian_setup();
        let mut pooled = SensitivitySpec::new(XiPrior::Point(0.35));
        pooled.mode = SensitivityMode::Pooled;
        let per_unit = SensitivitySpec::new(XiPrior::Point(0.35));
        let a = sensitivity_reweight(&ds, &d, &spec, &pooled, 7).unwrap();
        let b = sensitivity_reweight(&ds, &d, &spec, &per_unit, 8).unwrap();
        assert_eq!(a.normalized_weights(), b.normalized_weights());
    }

    #[test]
    fn probability_scale_point_zero_is_inert() {
        use crate::linalg::Mat;
        // tiny logistic outcome set: two draws, point(0) leaves weights flat
        let d = Dataset::new(
            alloc::vec![1.0, 0.0],
            alloc::vec![1, 0],
            Mat::from_rows(2, 1, alloc::vec![0.0, 0.0]),
            names(1),
            None,
        )
        .unwrap();
        let mut spec = crate::model::OutcomeModelSpec::bernoulli_logistic(
            crate::model::DesignSpec { covariates: alloc::vec![], intercept: true },
        );
        spec.include_treatment_main_effect = false;
        let draws = Mat::from_rows(2, 1, alloc::vec![0.5, -0.5]);
        let ds = DrawSet::new(ParamBlock::Beta, draws, alloc::vec!["intercept".into()], 0)
            .unwrap();
        let mut sens = SensitivitySpec::new(XiPrior::Point(0.0));
        sens.scale = XiScale::Probability;
        let out = sensitivity_reweight(&ds, &d, &spec, &sens, 5).unwrap();
        let w = out.normalized_weights();
        assert!((w[0] - 0.5).abs() < 1e-12);

        // a positive probability shift favors draws predicting lower p for
        // the treated success: intercept -0.5 fits (p + xi) better
        sens.prior = XiPrior::Point(0.2);
        let out = sensitivity_reweight(&ds, &d, &spec, &sens, 5).unwrap();
        let w = out.normalized_weights();
        assert!(w[1] > w[0], "expected the low-intercept draw to gain weight: {w:?}");
    }

    #[test]
    fn far_prior_degenerates() {
        let (d, spec, ds) = tiny_gaussian_setup();
        let sens = SensitivitySpec::new(XiPrior::Point(1.0e8));
        let err = sensitivity_reweight(&ds, &d, &spec, &sens, 5).unwrap_err();
        assert!(matches!(err, Error::DegenerateReweight(_)));
    }

    #[test]
    fn weights_invariant_to_constant_loglik_shift() {
        // adding a constant to all per-draw log-likelihoods must not change
        // normalized weights; emulate by scaling sigma2 identically
        let (d, spec, ds) = tiny_gaussian_setup();
        let sens = SensitivitySpec::new(XiPrior::Point(0.25));
        let out = sensitivity_reweight(&ds, &d, &spec, &sens, 5).unwrap();
        let w = out.normalized_weights();
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
