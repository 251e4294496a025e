//! ATE posteriors and summaries, plus the frequentist and bootstrap
//! baselines used for benchmarking.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::data::Dataset;
use crate::error::{Error, Result, Warning};
use crate::glm::{fit_logistic, fit_wls};
use crate::linalg::{dot, Mat};
use crate::model::{ClipCounter, OutcomeFamily, OutcomeModelSpec, PropensityModelSpec};
use crate::moment::clever_covariate;
use crate::sampler::DrawSet;
use crate::tilt::{effective_sample_size, ParticleSystem};

/// Where a set of ATE draws came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AteSource {
    Tilted,
    Original,
    Saarela,
}

/// Per-draw G-formula ATE values with weights.
#[derive(Debug, Clone)]
pub struct AtePosterior {
    pub draws: Vec<f64>,
    pub weights: Vec<f64>,
    pub source: AteSource,
    pub warnings: Vec<Warning>,
}

impl AtePosterior {
    pub fn new(draws: Vec<f64>, weights: Vec<f64>, source: AteSource) -> Result<Self> {
        if draws.len() != weights.len() {
            return Err(Error::Dimension("draws and weights lengths differ".into()));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && (sum - 1.0).abs() < 1e-9) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Domain("weights must form a simplex".into()));
        }
        Ok(AtePosterior { draws, weights, source, warnings: Vec::new() })
    }
}

/// Posterior mean plus an equal-tailed credible interval.
#[derive(Debug, Clone, PartialEq)]
pub struct AteSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub ess: f64,
}

/// Per-draw G-formula contrasts `(1/n) sum(m1 - m0)` for each beta draw row.
fn gformula_draws(beta: &Mat, d: &Dataset, spec: &OutcomeModelSpec) -> Result<Vec<f64>> {
    let k = spec.n_coef();
    if beta.cols() < k {
        return Err(Error::Dimension("beta draws narrower than coefficient count".into()));
    }
    let n = d.n() as f64;
    let d1 = spec.design_matrix_at(d, Some(1));
    let d0 = spec.design_matrix_at(d, Some(0));
    match spec.family {
        OutcomeFamily::BernoulliLogistic => {
            // risk difference: average of expit contrasts, one pass per draw
            let mut out = Vec::with_capacity(beta.rows());
            for s in 0..beta.rows() {
                let coef = &beta.row(s)[..k];
                let mut acc = 0.0;
                for i in 0..d.n() {
                    acc += crate::model::expit(dot(d1.row(i), coef))
                        - crate::model::expit(dot(d0.row(i), coef));
                }
                out.push(acc / n);
            }
            Ok(out)
        }
        _ => {
            // linear mean: contrast = (column-mean difference) . coef
            let mut diff_means = vec![0.0; k];
            for i in 0..d.n() {
                for j in 0..k {
                    diff_means[j] += d1.get(i, j) - d0.get(i, j);
                }
            }
            diff_means.iter_mut().for_each(|v| *v /= n);
            Ok((0..beta.rows())
                .map(|s| dot(&diff_means, &beta.row(s)[..k]))
                .collect())
        }
    }
}

/// ATE posterior from a tilted particle system (weights carried over).
pub fn ate_from_particles(
    ps: &ParticleSystem,
    d: &Dataset,
    spec: &OutcomeModelSpec,
) -> Result<AtePosterior> {
    let draws = gformula_draws(ps.beta(), d, spec)?;
    AtePosterior::new(draws, ps.weights().to_vec(), AteSource::Tilted)
}

/// ATE posterior straight from outcome-model draws (no coupling).
pub fn ate_from_draws(
    beta: &DrawSet,
    d: &Dataset,
    spec: &OutcomeModelSpec,
) -> Result<AtePosterior> {
    let draws = gformula_draws(beta.draws(), d, spec)?;
    AtePosterior::new(draws, beta.normalized_weights(), AteSource::Original)
}

/// Weighted equal-tailed quantile: smallest draw whose cumulative weight
/// reaches `q`.
fn weighted_quantile(sorted: &[(f64, f64)], q: f64) -> f64 {
    let mut acc = 0.0;
    for (v, w) in sorted {
        acc += w;
        if acc >= q {
            return *v;
        }
    }
    sorted.last().map(|(v, _)| *v).unwrap_or(f64::NAN)
}

/// Weighted mean and equal-tailed credible interval at `level`.
pub fn summarize(ap: &AtePosterior, level: f64) -> Result<AteSummary> {
    if ap.draws.len() < 2 {
        return Err(Error::Domain("need at least 2 draws to summarize".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain("level must lie in (0,1)".into()));
    }
    let mean: f64 = ap.draws.iter().zip(&ap.weights).map(|(d, w)| d * w).sum();
    let mut pairs: Vec<(f64, f64)> =
        ap.draws.iter().cloned().zip(ap.weights.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let tail = (1.0 - level) / 2.0;
    let ci_low = weighted_quantile(&pairs, tail);
    let ci_high = weighted_quantile(&pairs, 1.0 - tail);
    Ok(AteSummary {
        mean,
        ci_low,
        ci_high,
        level,
        ess: effective_sample_size(&ap.weights),
    })
}

/// Inverse probability weighting estimate with clipped propensities.
pub fn ipw_estimate(d: &Dataset, ps_values: &[f64]) -> Result<f64> {
    let mut clips = ClipCounter::default();
    ipw_estimate_counted(d, ps_values, &mut clips)
}

/// IPW estimate that also counts clipped propensity evaluations.
pub fn ipw_estimate_counted(
    d: &Dataset,
    ps_values: &[f64],
    clips: &mut ClipCounter,
) -> Result<f64> {
    if ps_values.len() != d.n() {
        return Err(Error::Dimension("propensity vector length != n".into()));
    }
    let mut terms = Vec::with_capacity(d.n());
    for i in 0..d.n() {
        let e = clips.clip(ps_values[i]);
        let a = f64::from(d.a()[i]);
        terms.push(clever_covariate(a, e) * d.y()[i]);
    }
    Ok(terms.iter().sum::<f64>() / d.n() as f64)
}

/// Frequentist AIPW estimate and its influence-function standard error.
///
/// The per-unit summand is `m1 - m0 + (a - e)/(e(1-e)) * (y - m_a)`; the
/// standard error is the sample standard deviation of the summands divided by
/// sqrt(n), which ignores nuisance-estimation noise (standard practice for
/// this estimator).
pub fn frequentist_dr(
    d: &Dataset,
    ps_values: &[f64],
    m1_values: &[f64],
    m0_values: &[f64],
) -> Result<(f64, f64)> {
    let n = d.n();
    if ps_values.len() != n || m1_values.len() != n || m0_values.len() != n {
        return Err(Error::Dimension("input vectors must all have length n".into()));
    }
    let mut clips = ClipCounter::default();
    let mut psi = Vec::with_capacity(n);
    for i in 0..n {
        let e = clips.clip(ps_values[i]);
        let a = f64::from(d.a()[i]);
        let m_obs = if d.a()[i] == 1 { m1_values[i] } else { m0_values[i] };
        psi.push(
            m1_values[i] - m0_values[i] + clever_covariate(a, e) * (d.y()[i] - m_obs),
        );
    }
    let (mean, sd) = crate::linalg::mean_sd(&psi);
    Ok((mean, sd / (n as f64).sqrt()))
}

/// The clever-covariate refit: augments the outcome design with
/// `(a - e)/(e(1-e))`, refits by least squares, and returns the G-formula
/// contrast with the covariate set to its counterfactual values
/// (`1/e` under treatment, `-1/(1-e)` under control).
pub fn bang_robins_refit(
    d: &Dataset,
    ps_values: &[f64],
    spec: &OutcomeModelSpec,
) -> Result<f64> {
    if spec.family != OutcomeFamily::GaussianLinear {
        return Err(Error::Domain("clever-covariate refit requires the linear outcome".into()));
    }
    let n = d.n();
    if ps_values.len() != n {
        return Err(Error::Dimension("propensity vector length != n".into()));
    }
    let mut clips = ClipCounter::default();
    let e: Vec<f64> = ps_values.iter().map(|v| clips.clip(*v)).collect();
    let base = spec.design_matrix(d);
    let k = base.cols();
    let mut x = Mat::zeros(n, k + 1);
    for i in 0..n {
        x.row_mut(i)[..k].copy_from_slice(base.row(i));
        x.set(i, k, clever_covariate(f64::from(d.a()[i]), e[i]));
    }
    let coef = fit_wls(&x, d.y(), None, 0.0)?;
    let phi = coef[k];
    let d1 = spec.design_matrix_at(d, Some(1));
    let d0 = spec.design_matrix_at(d, Some(0));
    let mut acc = 0.0;
    for i in 0..n {
        let m1 = dot(d1.row(i), &coef[..k]) + phi / e[i];
        let m0 = dot(d0.row(i), &coef[..k]) - phi / (1.0 - e[i]);
        acc += m1 - m0;
    }
    Ok(acc / n as f64)
}

/// Bayesian-bootstrap doubly robust draws: per replicate, Dirichlet(1,..,1)
/// weights drive a weighted logistic propensity fit and a weighted
/// least-squares outcome fit, and the weighted AIPW sum is one draw.
pub fn saarela_bootstrap_dr(
    d: &Dataset,
    outcome_spec: &OutcomeModelSpec,
    ps_spec: &PropensityModelSpec,
    replicates: usize,
    seed: u64,
) -> Result<AtePosterior> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    saarela_bootstrap_with(d, outcome_spec, ps_spec, replicates, move |xi| {
        // Dirichlet(1,...,1) via normalized unit exponentials
        let mut sum = 0.0;
        for v in xi.iter_mut() {
            let e = -(rng.random::<f64>().max(1e-300)).ln();
            *v = e;
            sum += e;
        }
        xi.iter_mut().for_each(|v| *v /= sum);
    })
}

/// Bootstrap core with a pluggable weight source (the test hook).
pub(crate) fn saarela_bootstrap_with<F: FnMut(&mut [f64])>(
    d: &Dataset,
    outcome_spec: &OutcomeModelSpec,
    ps_spec: &PropensityModelSpec,
    replicates: usize,
    mut draw_weights: F,
) -> Result<AtePosterior> {
    if replicates < 100 {
        return Err(Error::Domain("bootstrap needs at least 100 replicates".into()));
    }
    if outcome_spec.family != OutcomeFamily::GaussianLinear {
        return Err(Error::Domain(
            "the bootstrap baseline requires the linear outcome model".into(),
        ));
    }
    outcome_spec.check(d)?;
    ps_spec.check(d)?;
    let n = d.n();
    let ps_design = ps_spec.design_matrix(d);
    let outcome_design = outcome_spec.design_matrix(d);
    let d1 = outcome_spec.design_matrix_at(d, Some(1));
    let d0 = outcome_spec.design_matrix_at(d, Some(0));
    let a: Vec<f64> = d.a().iter().map(|v| f64::from(*v)).collect();
    let treated: Vec<f64> = a.clone();

    let mut xi = vec![0.0; n];
    let mut fit_weights = vec![0.0; n];
    let mut draws = Vec::with_capacity(replicates);
    let mut skipped = 0usize;
    for _ in 0..replicates {
        draw_weights(&mut xi);
        // scale to mean 1 so the ridge term is comparable to unweighted fits
        for (f, w) in fit_weights.iter_mut().zip(&xi) {
            *f = w * n as f64;
        }
        let fit = || -> Result<f64> {
            let ps_fit = fit_logistic(&ps_design, &treated, Some(&fit_weights), 1e-8, 50, 1e-8)?;
            let beta = fit_wls(&outcome_design, d.y(), Some(&fit_weights), 1e-10)?;
            let mut clips = ClipCounter::default();
            let mut acc = 0.0;
            for i in 0..n {
                let e = clips.clip(crate::model::expit(dot(ps_design.row(i), &ps_fit.coef)));
                let m1 = dot(d1.row(i), &beta);
                let m0 = dot(d0.row(i), &beta);
                let m_obs = if d.a()[i] == 1 { m1 } else { m0 };
                acc += xi[i]
                    * (m1 - m0 + clever_covariate(a[i], e) * (d.y()[i] - m_obs));
            }
            if !acc.is_finite() {
                return Err(Error::Linalg("non-finite bootstrap draw".into()));
            }
            Ok(acc)
        }();
        match fit {
            Ok(v) => draws.push(v),
            Err(_) => skipped += 1,
        }
    }
    if skipped * 10 > replicates {
        return Err(Error::TooManyFailures { failed: skipped, total: replicates });
    }
    let kept = draws.len();
    let mut out = AtePosterior::new(draws, vec![1.0 / kept as f64; kept], AteSource::Saarela)?;
    if skipped > 0 {
        out.warnings.push(Warning::SkippedReplicates { skipped, total: replicates });
    }
    Ok(out)
}
