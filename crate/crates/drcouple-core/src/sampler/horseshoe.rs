//! Horseshoe-prior Gibbs samplers using the inverse-gamma auxiliary-variable
//! representation of the half-Cauchy local and global scales.
//!
//! Covariate coefficients get the global-local shrinkage; the intercept (and
//! the treatment main effect, for the outcome model) keep a wide Gaussian
//! prior. The linear model is a full Gibbs sweep; logistic models replace the
//! coefficient conditional with one random-walk Metropolis step per sweep.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::data::Dataset;
use crate::error::{Error, Result, Warning};
use crate::glm::{fit_logistic, fit_wls};
use crate::linalg::{Cholesky, Mat};
use crate::model::{OutcomeModelSpec, PropensityModelSpec};
use crate::sampler::{metropolis::logistic_loglik, DrawSet, ParamBlock, SamplerConfig};

/// Prior variance for unshrunk coordinates (intercept, treatment effect).
/// Kept very diffuse: in the linear model this prior is scaled by the noise
/// variance, so tighter values leak coefficient magnitude into it.
const UNSHRUNK_VARIANCE: f64 = 1e4;
/// Clamp for the auxiliary scales, guarding the Gibbs sweep against
/// under/overflow.
const SCALE_FLOOR: f64 = 1e-12;
const SCALE_CEIL: f64 = 1e12;

#[inline]
fn inv_gamma(rng: &mut Xoshiro256PlusPlus, shape: f64, rate: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate.max(1e-300)).expect("valid gamma");
    (1.0 / g.sample(rng)).clamp(SCALE_FLOOR, SCALE_CEIL)
}

/// Horseshoe scale state for the shrunk coordinates.
struct Scales {
    lambda2: Vec<f64>,
    nu: Vec<f64>,
    tau2: f64,
    xi: f64,
}

impl Scales {
    fn new(p: usize) -> Self {
        Scales { lambda2: vec![1.0; p], nu: vec![1.0; p], tau2: 1.0, xi: 1.0 }
    }

    /// Given current coefficients (already divided by sigma when relevant),
    /// refresh lambda2, nu, tau2, xi from their inverse-gamma conditionals.
    fn update(&mut self, rng: &mut Xoshiro256PlusPlus, scaled_beta: &[f64]) {
        let p = self.lambda2.len();
        for j in 0..p {
            let b2 = scaled_beta[j] * scaled_beta[j];
            self.lambda2[j] =
                inv_gamma(rng, 1.0, 1.0 / self.nu[j] + b2 / (2.0 * self.tau2));
            self.nu[j] = inv_gamma(rng, 1.0, 1.0 + 1.0 / self.lambda2[j]);
        }
        let mut quad = 0.0;
        for j in 0..p {
            quad += scaled_beta[j] * scaled_beta[j] / self.lambda2[j];
        }
        self.tau2 = inv_gamma(rng, (p as f64 + 1.0) / 2.0, 1.0 / self.xi + quad / 2.0);
        self.xi = inv_gamma(rng, 1.0, 1.0 + 1.0 / self.tau2);
    }

    /// Prior variance of coordinate `j` among the shrunk set.
    #[inline]
    fn variance(&self, j: usize) -> f64 {
        (self.tau2 * self.lambda2[j]).clamp(SCALE_FLOOR, SCALE_CEIL)
    }
}

/// Gibbs sampler for the Gaussian-linear outcome model under the horseshoe.
/// Draw columns are the coefficients followed by the noise variance.
pub fn sample_linear_horseshoe(
    d: &Dataset,
    spec: &OutcomeModelSpec,
    s: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<DrawSet> {
    let x = spec.design_matrix(d);
    let y = d.y();
    let n = x.rows();
    let k = x.cols();
    let n_unshrunk = usize::from(spec.design.intercept)
        + usize::from(spec.include_treatment_main_effect);
    let p_shrunk = k - n_unshrunk;

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let xtx = x.xtwx(None);
    let xty = x.xtwy(None, y);

    // Initialize from a ridge fit.
    let mut beta = fit_wls(&x, y, None, 1e-6)
        .unwrap_or_else(|_| vec![0.0; k]);
    let resid0: f64 = {
        let fitted = x.matvec(&beta);
        y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let mut sigma2 = (resid0 / n as f64).max(1e-6);
    let mut scales = Scales::new(p_shrunk);

    let thin = cfg.thin.max(1);
    let total = cfg.burn_in + s * thin;
    let mut draws = Mat::zeros(s, k + 1);
    let mut kept = 0;
    let mut z = vec![0.0; k];

    for it in 0..total {
        // beta | scales, sigma2
        let mut a = xtx.clone();
        for j in 0..k {
            let prior_var = if j < n_unshrunk {
                UNSHRUNK_VARIANCE
            } else {
                scales.variance(j - n_unshrunk)
            };
            a.set(j, j, a.get(j, j) + 1.0 / prior_var);
        }
        let chol = Cholesky::new_with_jitter(&a, 1e-12)?;
        let mean = chol.solve(&xty);
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let mut u = z.clone();
        chol.back_solve(&mut u);
        let sd = sigma2.sqrt();
        for j in 0..k {
            beta[j] = mean[j] + sd * u[j];
        }

        // sigma2 | beta, scales
        let fitted = x.matvec(&beta);
        let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
        let mut prior_quad = 0.0;
        for j in 0..k {
            let prior_var = if j < n_unshrunk {
                UNSHRUNK_VARIANCE
            } else {
                scales.variance(j - n_unshrunk)
            };
            prior_quad += beta[j] * beta[j] / prior_var;
        }
        sigma2 = inv_gamma(
            &mut rng,
            0.01 + (n + k) as f64 / 2.0,
            0.01 + 0.5 * (rss + prior_quad),
        );

        // scales | beta, sigma2 (coefficients standardized by sigma)
        let sigma = sigma2.sqrt();
        let scaled: Vec<f64> =
            beta[n_unshrunk..].iter().map(|b| b / sigma).collect();
        scales.update(&mut rng, &scaled);

        if it >= cfg.burn_in && (it - cfg.burn_in + 1) % thin == 0 && kept < s {
            let out = draws.row_mut(kept);
            out[..k].copy_from_slice(&beta);
            out[k] = sigma2;
            kept += 1;
        }
    }

    DrawSet::new(ParamBlock::Beta, draws, spec.param_names(d), seed)
}

/// Metropolis-within-Gibbs for a logistic likelihood under the horseshoe:
/// one random-walk coefficient update per sweep, exact inverse-gamma scale
/// updates afterwards.
#[allow(clippy::too_many_arguments)]
fn sample_logistic_horseshoe(
    design: Mat,
    y: Vec<f64>,
    n_unshrunk: usize,
    param_names: Vec<alloc::string::String>,
    block: ParamBlock,
    s: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<DrawSet> {
    let k = design.cols();
    let p_shrunk = k - n_unshrunk;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);

    let fit = fit_logistic(&design, &y, None, 1.0, 50, 1e-8)?;
    let proposal_chol = Cholesky::new_with_jitter(&fit.cov, 1e-10)?;
    let mut coef = fit.coef.clone();
    let mut scales = Scales::new(p_shrunk);
    let mut scale = 2.38 / (k as f64).sqrt();

    let prior_quad = |coef: &[f64], scales: &Scales| -> f64 {
        let mut q = 0.0;
        for j in 0..k {
            let v = if j < n_unshrunk {
                UNSHRUNK_VARIANCE
            } else {
                scales.variance(j - n_unshrunk)
            };
            q += coef[j] * coef[j] / v;
        }
        q
    };

    let thin = cfg.thin.max(1);
    let total = cfg.burn_in + s * thin;
    let mut draws = Mat::zeros(s, k);
    let mut kept = 0;
    let mut batch_accepts = 0usize;
    let mut post_accepts = 0usize;
    let mut post_iters = 0usize;
    let mut log_post = logistic_loglik(&design, &y, &coef) - 0.5 * prior_quad(&coef, &scales);
    let mut z = vec![0.0; k];
    let mut proposal = vec![0.0; k];

    for it in 0..total {
        // coefficient block: one random-walk Metropolis step
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let step = proposal_chol.lower_matvec(&z);
        for j in 0..k {
            proposal[j] = coef[j] + scale * step[j];
        }
        let log_post_new =
            logistic_loglik(&design, &y, &proposal) - 0.5 * prior_quad(&proposal, &scales);
        let log_u = (rng.random::<f64>()).max(1e-300).ln();
        if log_u < log_post_new - log_post {
            coef.copy_from_slice(&proposal);
            batch_accepts += 1;
            if it >= cfg.burn_in {
                post_accepts += 1;
            }
        }

        // scale block: exact conditionals given the coefficients; the MH
        // target moves with the scales, so refresh the cached density
        scales.update(&mut rng, &coef[n_unshrunk..]);
        log_post = logistic_loglik(&design, &y, &coef) - 0.5 * prior_quad(&coef, &scales);

        if it < cfg.burn_in {
            if (it + 1) % cfg.adapt_batch == 0 {
                let rate = batch_accepts as f64 / cfg.adapt_batch as f64;
                scale *= ((rate - cfg.target_accept) * 1.0).exp();
                scale = scale.clamp(1e-4, 1e4);
                batch_accepts = 0;
            }
        } else {
            post_iters += 1;
            if (it - cfg.burn_in + 1) % thin == 0 && kept < s {
                draws.row_mut(kept).copy_from_slice(&coef);
                kept += 1;
            }
        }
    }

    let mut out = DrawSet::new(block, draws, param_names, seed)?;
    let rate = if post_iters > 0 {
        post_accepts as f64 / post_iters as f64
    } else {
        f64::NAN
    };
    if !(0.05..=0.8).contains(&rate) {
        out.push_warning(Warning::AcceptanceRate { rate });
    }
    Ok(out)
}

pub fn sample_logistic_horseshoe_propensity(
    d: &Dataset,
    spec: &PropensityModelSpec,
    s: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<DrawSet> {
    let design = spec.design_matrix(d);
    let y: Vec<f64> = d.a().iter().map(|v| f64::from(*v)).collect();
    sample_logistic_horseshoe(
        design,
        y,
        usize::from(spec.design.intercept),
        spec.param_names(d),
        ParamBlock::Alpha,
        s,
        seed,
        cfg,
    )
}

pub fn sample_logistic_horseshoe_outcome(
    d: &Dataset,
    spec: &OutcomeModelSpec,
    s: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<DrawSet> {
    let design = spec.design_matrix(d);
    let y = d.y().to_vec();
    for (i, v) in y.iter().enumerate() {
        if *v != 0.0 && *v != 1.0 {
            return Err(Error::Domain(alloc::format!(
                "logistic outcome needs 0/1 responses, found {v} at row {i}"
            )));
        }
    }
    let n_unshrunk = usize::from(spec.design.intercept)
        + usize::from(spec.include_treatment_main_effect);
    sample_logistic_horseshoe(
        design,
        y,
        n_unshrunk,
        spec.param_names(d),
        ParamBlock::Beta,
        s,
        seed,
        cfg,
    )
}

/// Block-level entry point: horseshoe draws for the propensity coefficients
/// (`Alpha`) or the Gaussian-linear outcome coefficients (`Beta`), both on
/// the full covariate set with an intercept.
pub fn sample_horseshoe_posterior(
    d: &Dataset,
    block: ParamBlock,
    s: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<DrawSet> {
    crate::sampler::require_valid(d)?;
    let (outcome, ps) = crate::sampler::default_specs(d);
    match block {
        ParamBlock::Alpha => sample_logistic_horseshoe_propensity(d, &ps, s, seed, cfg),
        ParamBlock::Beta => sample_linear_horseshoe(d, &outcome, s, seed, cfg),
    }
}
