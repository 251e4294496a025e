//! Weighted maximum-likelihood fits: IRLS for logistic regression and
//! weighted least squares. These back the frequentist baselines, the
//! bootstrap estimator, and the Metropolis preconditioner.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::model::expit;

/// Result of an IRLS logistic fit.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    /// Inverse of the (ridge-penalized) Fisher information at the optimum.
    pub cov: Mat,
    pub converged: bool,
    pub iterations: usize,
}

/// Fits logistic regression by iteratively reweighted least squares.
///
/// `y` must be 0/1 valued; `weights` are observation weights (None =
/// unweighted); `ridge` adds `ridge * I` to the information matrix, which
/// doubles as a Gaussian prior precision when used by the samplers.
pub fn fit_logistic(
    x: &Mat,
    y: &[f64],
    weights: Option<&[f64]>,
    ridge: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LogisticFit> {
    let n = x.rows();
    let k = x.cols();
    if y.len() != n {
        return Err(Error::Dimension("response length != design rows".into()));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Dimension("weight length != design rows".into()));
        }
    }
    let mut coef = vec![0.0; k];
    let mut eta = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    let mut irls_w = vec![0.0; n];
    let mut work = vec![0.0; n];
    for it in 0..max_iter {
        iterations = it + 1;
        for i in 0..n {
            let p = expit(eta[i]);
            let wi = weights.map_or(1.0, |w| w[i]);
            // Floor the curvature so near-separated fits stay solvable.
            irls_w[i] = (wi * p * (1.0 - p)).max(wi * 1e-10);
            work[i] = wi * (y[i] - p);
        }
        let mut info = x.xtwx(Some(&irls_w));
        for j in 0..k {
            info.set(j, j, info.get(j, j) + ridge);
        }
        let mut score = x.xtwy(None, &work);
        for j in 0..k {
            score[j] -= ridge * coef[j];
        }
        let chol = Cholesky::new(&info)
            .map_err(|_| Error::Linalg("singular information matrix in logistic fit".into()))?;
        let step = chol.solve(&score);
        let mut max_step = 0.0_f64;
        for j in 0..k {
            coef[j] += step[j];
            max_step = max_step.max(step[j].abs());
        }
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(Error::Linalg("logistic fit diverged to non-finite values".into()));
        }
        eta = x.matvec(&coef);
        if max_step < tol {
            converged = true;
            break;
        }
    }
    // Covariance at the final coefficients.
    for i in 0..n {
        let p = expit(eta[i]);
        let wi = weights.map_or(1.0, |w| w[i]);
        irls_w[i] = (wi * p * (1.0 - p)).max(wi * 1e-10);
    }
    let mut info = x.xtwx(Some(&irls_w));
    for j in 0..k {
        info.set(j, j, info.get(j, j) + ridge);
    }
    let cov = Cholesky::new_with_jitter(&info, 1e-10)?.inverse();
    Ok(LogisticFit { coef, cov, converged, iterations })
}

/// Weighted least squares: solves `(Xᵀ W X) b = Xᵀ W y` with an optional
/// ridge term for numerical safety.
pub fn fit_wls(x: &Mat, y: &[f64], weights: Option<&[f64]>, ridge: f64) -> Result<Vec<f64>> {
    if y.len() != x.rows() {
        return Err(Error::Dimension("response length != design rows".into()));
    }
    if let Some(w) = weights {
        if w.len() != x.rows() {
            return Err(Error::Dimension("weight length != design rows".into()));
        }
    }
    let mut gram = x.xtwx(weights);
    for j in 0..x.cols() {
        gram.set(j, j, gram.get(j, j) + ridge);
    }
    let rhs = x.xtwy(weights, y);
    let chol = crate::linalg::cholesky_full_rank(&gram)
        .map_err(|_| Error::Linalg("rank-deficient design in least squares".into()))?;
    let coef = chol.solve(&rhs);
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::Linalg("least-squares solution is non-finite".into()));
    }
    Ok(coef)
}
