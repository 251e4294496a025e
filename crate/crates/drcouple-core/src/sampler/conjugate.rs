//! Exact posterior draws for the Gaussian-linear outcome model and the
//! squared-loss pseudo-likelihood.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::model::OutcomeModelSpec;
use crate::sampler::{DrawSet, ParamBlock};

/// Inverse-gamma hyperparameters for the noise variance (weakly informative).
const SIGMA2_SHAPE: f64 = 0.01;
const SIGMA2_RATE: f64 = 0.01;

/// Rejects collinear designs before the prior ridge can paper over them.
fn check_full_rank(xtx: &Mat) -> Result<()> {
    crate::linalg::cholesky_full_rank(xtx)
        .map(|_| ())
        .map_err(|_| Error::Linalg("design matrix is rank deficient".into()))
}

/// Exact draws from the conjugate normal-inverse-gamma posterior of the
/// Gaussian-linear outcome model with prior `beta | s2 ~ N(0, g s2 I)`,
/// `s2 ~ IG(0.01, 0.01)`. The last draw column is the noise variance.
pub fn sample_gaussian_linear(
    d: &Dataset,
    spec: &OutcomeModelSpec,
    prior_variance: f64,
    s: usize,
    seed: u64,
) -> Result<DrawSet> {
    let x = spec.design_matrix(d);
    let y = d.y();
    let n = x.rows();
    let k = x.cols();
    check_full_rank(&x.xtwx(None))?;

    let mut a = x.xtwx(None);
    for j in 0..k {
        a.set(j, j, a.get(j, j) + 1.0 / prior_variance);
    }
    let chol = Cholesky::new(&a)?;
    let xty = x.xtwy(None, y);
    let beta_hat = chol.solve(&xty);
    let yty: f64 = y.iter().map(|v| v * v).sum();
    let bab: f64 = beta_hat.iter().zip(&xty).map(|(b, t)| b * t).sum();
    let shape_n = SIGMA2_SHAPE + n as f64 / 2.0;
    let rate_n = (SIGMA2_RATE + 0.5 * (yty - bab)).max(1e-300);

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let gamma = Gamma::new(shape_n, 1.0 / rate_n)
        .map_err(|_| Error::Domain("invalid inverse-gamma parameters".into()))?;
    let mut draws = Mat::zeros(s, k + 1);
    let mut z = vec![0.0; k];
    for row in 0..s {
        let sigma2 = 1.0 / gamma.sample(&mut rng);
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        // u = L⁻ᵀ z has covariance A⁻¹
        let mut u = z.clone();
        chol.back_solve(&mut u);
        let sd = sigma2.sqrt();
        let out = draws.row_mut(row);
        for j in 0..k {
            out[j] = beta_hat[j] + sd * u[j];
        }
        out[k] = sigma2;
    }
    DrawSet::new(ParamBlock::Beta, draws, spec.param_names(d), seed)
}

/// Exact draws from the squared-loss pseudo-posterior
/// `exp(-omega * sum((y - X b)^2)) * N(b | 0, v I)`, which is Gaussian with
/// precision `2 omega XᵀX + I/v`.
pub fn sample_general_bayes(
    d: &Dataset,
    spec: &OutcomeModelSpec,
    prior_variance: f64,
    s: usize,
    seed: u64,
) -> Result<DrawSet> {
    let omega = spec.learning_rate;
    let x = spec.design_matrix(d);
    let y = d.y();
    let k = x.cols();
    check_full_rank(&x.xtwx(None))?;

    let mut precision = x.xtwx(None);
    for i in 0..k {
        for j in 0..k {
            precision.set(i, j, precision.get(i, j) * 2.0 * omega);
        }
    }
    for j in 0..k {
        precision.set(j, j, precision.get(j, j) + 1.0 / prior_variance);
    }
    let chol = Cholesky::new(&precision)?;
    let mut rhs = x.xtwy(None, y);
    rhs.iter_mut().for_each(|v| *v *= 2.0 * omega);
    let mean = chol.solve(&rhs);

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut draws = Mat::zeros(s, k);
    let mut z = vec![0.0; k];
    for row in 0..s {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let mut u = z.clone();
        chol.back_solve(&mut u);
        let out = draws.row_mut(row);
        for j in 0..k {
            out[j] = mean[j] + u[j];
        }
    }
    DrawSet::new(ParamBlock::Beta, draws, spec.param_names(d), seed)
}

/// Closed-form posterior moments of the conjugate model, for oracle checks:
/// returns (posterior mean of beta, marginal posterior covariance of beta).
pub fn conjugate_posterior_moments(
    d: &Dataset,
    spec: &OutcomeModelSpec,
    prior_variance: f64,
) -> Result<(Vec<f64>, Mat)> {
    let x = spec.design_matrix(d);
    let y = d.y();
    let n = x.rows();
    let k = x.cols();
    let mut a = x.xtwx(None);
    for j in 0..k {
        a.set(j, j, a.get(j, j) + 1.0 / prior_variance);
    }
    let chol = Cholesky::new(&a)?;
    let xty = x.xtwy(None, y);
    let beta_hat = chol.solve(&xty);
    let yty: f64 = y.iter().map(|v| v * v).sum();
    let bab: f64 = beta_hat.iter().zip(&xty).map(|(b, t)| b * t).sum();
    let shape_n = SIGMA2_SHAPE + n as f64 / 2.0;
    let rate_n = SIGMA2_RATE + 0.5 * (yty - bab);
    // marginal cov of beta = E[s2] A⁻¹ with E[s2] = rate/(shape-1)
    let e_sigma2 = rate_n / (shape_n - 1.0);
    let mut cov = chol.inverse();
    for i in 0..k {
        for j in 0..k {
            cov.set(i, j, cov.get(i, j) * e_sigma2);
        }
    }
    Ok((beta_hat, cov))
}
