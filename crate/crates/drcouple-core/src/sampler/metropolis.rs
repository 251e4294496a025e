//! Adaptive random-walk Metropolis for logistic-regression posteriors.
//!
//! The proposal is a multivariate normal preconditioned by the inverse Fisher
//! information at a penalized IRLS fit; a single global scale adapts towards
//! the target acceptance rate during burn-in and is frozen afterwards, so the
//! collected draws come from a fixed-kernel chain.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Result, Warning};
use crate::glm::fit_logistic;
use crate::linalg::{dot, Cholesky, Mat};
use crate::sampler::{DrawSet, ParamBlock, SamplerConfig};

/// Coefficient magnitude beyond which we flag possible separation.
const SEPARATION_BOUND: f64 = 50.0;

/// Bernoulli log-likelihood `sum(y*eta - log(1+exp(eta)))`, stable in both
/// tails. Shared with the Metropolis-within-Gibbs horseshoe sampler.
pub(crate) fn logistic_loglik(design: &Mat, y: &[f64], coef: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..design.rows() {
        let eta = dot(design.row(i), coef);
        let log1pexp = if eta > 35.0 {
            eta
        } else if eta < -35.0 {
            0.0
        } else {
            (1.0 + eta.exp()).ln()
        };
        ll += y[i] * eta - log1pexp;
    }
    ll
}

struct LogisticTarget<'a> {
    design: &'a Mat,
    y: &'a [f64],
    prior_precision: f64,
}

impl LogisticTarget<'_> {
    /// Log posterior density up to a constant.
    fn log_density(&self, coef: &[f64]) -> f64 {
        let quad: f64 = coef.iter().map(|b| b * b).sum();
        logistic_loglik(self.design, self.y, coef) - 0.5 * self.prior_precision * quad
    }
}

/// Runs the adaptive random-walk chain and collects `s` thinned draws.
#[allow(clippy::too_many_arguments)]
pub fn sample_logistic(
    design: Mat,
    y: Vec<f64>,
    prior_variance: f64,
    param_names: Vec<String>,
    block: ParamBlock,
    s: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<DrawSet> {
    let k = design.cols();
    let target = LogisticTarget {
        design: &design,
        y: &y,
        prior_precision: 1.0 / prior_variance,
    };

    // Penalized IRLS fit supplies the start point and proposal shape.
    let fit = fit_logistic(&design, &y, None, 1.0 / prior_variance, 50, 1e-8)?;
    let proposal_chol = Cholesky::new_with_jitter(&fit.cov, 1e-10)?;

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut coef = fit.coef.clone();
    let mut log_post = target.log_density(&coef);
    let mut scale = 2.38 / (k as f64).sqrt();

    let total = cfg.burn_in + s * cfg.thin.max(1);
    let mut draws = Mat::zeros(s, k);
    let mut kept = 0;
    let mut batch_accepts = 0usize;
    let mut post_accepts = 0usize;
    let mut post_iters = 0usize;
    let mut z = vec![0.0; k];
    let mut proposal = vec![0.0; k];

    for it in 0..total {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let step = proposal_chol.lower_matvec(&z);
        for j in 0..k {
            proposal[j] = coef[j] + scale * step[j];
        }
        let log_post_new = target.log_density(&proposal);
        let log_u = (rng.random::<f64>()).max(1e-300).ln();
        if log_u < log_post_new - log_post {
            coef.copy_from_slice(&proposal);
            log_post = log_post_new;
            batch_accepts += 1;
            if it >= cfg.burn_in {
                post_accepts += 1;
            }
        }
        if it < cfg.burn_in {
            if (it + 1) % cfg.adapt_batch == 0 {
                let rate = batch_accepts as f64 / cfg.adapt_batch as f64;
                scale *= ((rate - cfg.target_accept) * 1.0).exp();
                scale = scale.clamp(1e-4, 1e4);
                batch_accepts = 0;
            }
        } else {
            post_iters += 1;
            if (it - cfg.burn_in + 1) % cfg.thin.max(1) == 0 && kept < s {
                draws.row_mut(kept).copy_from_slice(&coef);
                kept += 1;
            }
        }
    }
    debug_assert_eq!(kept, s);

    let mut out = DrawSet::new(block, draws, param_names, seed)?;
    let rate = if post_iters > 0 {
        post_accepts as f64 / post_iters as f64
    } else {
        f64::NAN
    };
    if !(0.05..=0.8).contains(&rate) {
        out.push_warning(Warning::AcceptanceRate { rate });
    }
    let max_abs = out
        .draws()
        .data()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_abs > SEPARATION_BOUND {
        out.push_warning(Warning::PossibleSeparation { max_abs_coef: max_abs });
    }
    Ok(out)
}
