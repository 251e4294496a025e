//! Model specifications, design matrices, and prediction helpers.
//!
//! Coefficient layout for the outcome model is `[intercept?, treatment?,
//! covariates...]`; for the propensity model `[intercept?, covariates...]`.
//! Samplers, moment evaluation and the G-formula all rely on this ordering.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Lower clipping bound for propensity scores used in ratios; the upper bound
/// is its mirror image. Keeps the moment function and IPW terms bounded.
pub const PS_CLIP: f64 = 1e-3;

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Clips a propensity score into `[PS_CLIP, 1 - PS_CLIP]`.
#[inline]
pub fn clip_ps(e: f64) -> f64 {
    e.max(PS_CLIP).min(1.0 - PS_CLIP)
}

/// Tracks how many propensity evaluations were clipped.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClipCounter {
    pub clipped: usize,
    pub total: usize,
}

impl ClipCounter {
    #[inline]
    pub fn clip(&mut self, e: f64) -> f64 {
        self.total += 1;
        let c = clip_ps(e);
        if c != e {
            self.clipped += 1;
        }
        c
    }

    pub fn merge(&mut self, other: ClipCounter) {
        self.clipped += other.clipped;
        self.total += other.total;
    }
}

/// Covariate subset plus intercept flag.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub covariates: Vec<usize>,
    pub intercept: bool,
}

impl DesignSpec {
    /// All covariate columns with an intercept.
    pub fn all(d: &Dataset) -> Self {
        DesignSpec { covariates: (0..d.p()).collect(), intercept: true }
    }

    pub fn with_columns(covariates: Vec<usize>) -> Self {
        DesignSpec { covariates, intercept: true }
    }

    pub fn check(&self, d: &Dataset) -> Result<()> {
        for &j in &self.covariates {
            if j >= d.p() {
                return Err(Error::Domain(format!(
                    "design references column {j} but the dataset has {} columns",
                    d.p()
                )));
            }
        }
        Ok(())
    }

    pub fn n_columns(&self) -> usize {
        self.covariates.len() + usize::from(self.intercept)
    }
}

/// Prior on a coefficient block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorSpec {
    /// Independent N(0, variance) on every coefficient.
    Gaussian { variance: f64 },
    /// Global-local horseshoe shrinkage (no tunables).
    Horseshoe,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Gaussian { variance: 100.0 }
    }
}

impl PriorSpec {
    pub fn check(&self) -> Result<()> {
        if let PriorSpec::Gaussian { variance } = self {
            if !(*variance > 0.0) {
                return Err(Error::Domain("gaussian prior variance must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Outcome-model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeFamily {
    /// Gaussian likelihood, linear mean, conjugate normal-inverse-gamma draws.
    GaussianLinear,
    /// Logistic regression for binary outcomes (risk-difference estimand).
    BernoulliLogistic,
    /// Loss-based pseudo-likelihood `exp(-omega * sum of squared residuals)`.
    GeneralBayesSquaredLoss,
}

/// Specification of the outcome regression model.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModelSpec {
    pub family: OutcomeFamily,
    /// Learning rate of the squared-loss pseudo-likelihood; ignored by the
    /// other families.
    pub learning_rate: f64,
    pub include_treatment_main_effect: bool,
    pub design: DesignSpec,
    pub prior: PriorSpec,
}

impl OutcomeModelSpec {
    pub fn gaussian_linear(design: DesignSpec) -> Self {
        OutcomeModelSpec {
            family: OutcomeFamily::GaussianLinear,
            learning_rate: 1.0,
            include_treatment_main_effect: true,
            design,
            // The conjugate prior scales with the noise variance, so it must
            // be diffuse relative to the squared coefficient magnitudes or it
            // leaks into the variance posterior and widens every interval.
            prior: PriorSpec::Gaussian { variance: 1e4 },
        }
    }

    pub fn bernoulli_logistic(design: DesignSpec) -> Self {
        OutcomeModelSpec {
            family: OutcomeFamily::BernoulliLogistic,
            ..OutcomeModelSpec::gaussian_linear(design)
        }
    }

    pub fn general_bayes(design: DesignSpec, learning_rate: f64) -> Self {
        OutcomeModelSpec {
            family: OutcomeFamily::GeneralBayesSquaredLoss,
            learning_rate,
            ..OutcomeModelSpec::gaussian_linear(design)
        }
    }

    pub fn check(&self, d: &Dataset) -> Result<()> {
        self.design.check(d)?;
        self.prior.check()?;
        if self.family == OutcomeFamily::GeneralBayesSquaredLoss && !(self.learning_rate > 0.0) {
            return Err(Error::Domain("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Number of regression coefficients.
    pub fn n_coef(&self) -> usize {
        self.design.n_columns() + usize::from(self.include_treatment_main_effect)
    }

    /// Width of one posterior draw row: coefficients plus the noise variance
    /// for the full Gaussian likelihood.
    pub fn draw_dim(&self) -> usize {
        self.n_coef() + usize::from(self.family == OutcomeFamily::GaussianLinear)
    }

    /// Names for the draw columns, in layout order.
    pub fn param_names(&self, d: &Dataset) -> Vec<alloc::string::String> {
        let mut names = Vec::with_capacity(self.draw_dim());
        if self.design.intercept {
            names.push("intercept".into());
        }
        if self.include_treatment_main_effect {
            names.push("treatment".into());
        }
        for &j in &self.design.covariates {
            names.push(d.column_names()[j].clone());
        }
        if self.family == OutcomeFamily::GaussianLinear {
            names.push("sigma2".into());
        }
        names
    }

    /// Design matrix under the observed treatment.
    pub fn design_matrix(&self, d: &Dataset) -> Mat {
        self.design_matrix_at(d, None)
    }

    /// Design matrix with treatment forced to `a` (None = observed).
    pub fn design_matrix_at(&self, d: &Dataset, a: Option<u8>) -> Mat {
        let n = d.n();
        let k = self.n_coef();
        let mut m = Mat::zeros(n, k);
        for i in 0..n {
            let mut j = 0;
            if self.design.intercept {
                m.set(i, j, 1.0);
                j += 1;
            }
            if self.include_treatment_main_effect {
                let ai = a.unwrap_or(d.a()[i]);
                m.set(i, j, f64::from(ai));
                j += 1;
            }
            for &c in &self.design.covariates {
                m.set(i, j, d.x().get(i, c));
                j += 1;
            }
        }
        m
    }

    /// Mean response for the linear predictor under this family.
    #[inline]
    pub fn mean_from_eta(&self, eta: f64) -> f64 {
        match self.family {
            OutcomeFamily::BernoulliLogistic => expit(eta),
            _ => eta,
        }
    }

    /// Per-unit mean predictions m_a for one coefficient vector.
    pub fn predict(&self, design_at_a: &Mat, coef: &[f64]) -> Vec<f64> {
        design_at_a
            .matvec(coef)
            .into_iter()
            .map(|eta| self.mean_from_eta(eta))
            .collect()
    }
}

/// Specification of the propensity-score model (logistic regression).
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModelSpec {
    pub design: DesignSpec,
    pub prior: PriorSpec,
}

impl PropensityModelSpec {
    pub fn logistic(design: DesignSpec) -> Self {
        PropensityModelSpec { design, prior: PriorSpec::default() }
    }

    pub fn check(&self, d: &Dataset) -> Result<()> {
        self.design.check(d)?;
        self.prior.check()
    }

    pub fn n_coef(&self) -> usize {
        self.design.n_columns()
    }

    pub fn param_names(&self, d: &Dataset) -> Vec<alloc::string::String> {
        let mut names = Vec::with_capacity(self.n_coef());
        if self.design.intercept {
            names.push("intercept".into());
        }
        for &j in &self.design.covariates {
            names.push(d.column_names()[j].clone());
        }
        names
    }

    pub fn design_matrix(&self, d: &Dataset) -> Mat {
        let n = d.n();
        let k = self.n_coef();
        let mut m = Mat::zeros(n, k);
        for i in 0..n {
            let mut j = 0;
            if self.design.intercept {
                m.set(i, j, 1.0);
                j += 1;
            }
            for &c in &self.design.covariates {
                m.set(i, j, d.x().get(i, c));
                j += 1;
            }
        }
        m
    }

    /// Unclipped propensity scores for one coefficient vector.
    pub fn propensities(&self, design: &Mat, coef: &[f64]) -> Vec<f64> {
        design.matvec(coef).into_iter().map(expit).collect()
    }
}
