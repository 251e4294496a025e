//! Doubly robust moment functions used as tilting constraints.
//!
//! The scalar constraint is the residual average weighted by the clever
//! covariate `(A - e)/(e(1-e))`: zero in posterior mean is what confers double
//! robustness on the G-formula contrast. Three variants are supported: the
//! plain DR moment, the selected-covariate variant (propensity restricted to a
//! subset while the outcome keeps every coefficient), and the
//! subclassification variant that replaces `e` with within-stratum treated
//! shares.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::model::{ClipCounter, DesignSpec, OutcomeModelSpec, PropensityModelSpec};

/// Which moment function couples the posteriors.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentSpec {
    /// The plain doubly robust moment.
    Dr,
    /// Propensity restricted to the covariate columns in `selected`; the
    /// outcome model keeps its full coefficient vector.
    Selected { selected: Vec<usize> },
    /// Subclassification on the estimated propensity score with `n_strata`
    /// equal-frequency strata.
    Subclass { n_strata: usize },
}

impl MomentSpec {
    pub fn check(&self, d: &Dataset) -> Result<()> {
        match self {
            MomentSpec::Dr => Ok(()),
            MomentSpec::Selected { selected } => {
                if selected.is_empty() {
                    return Err(Error::Domain("selected covariate set is empty".into()));
                }
                DesignSpec::with_columns(selected.clone()).check(d)
            }
            MomentSpec::Subclass { n_strata } => {
                if *n_strata < 2 {
                    return Err(Error::Domain("subclassification needs at least 2 strata".into()));
                }
                if d.n() < *n_strata {
                    return Err(Error::Domain("more strata than units".into()));
                }
                Ok(())
            }
        }
    }
}

/// The clever covariate `(a - e)/(e(1-e))`, computed as
/// `a/e - (1-a)/(1-e)` — identical for binary `a`, and the form that keeps
/// the IPW and AIPW summands bit-for-bit shared.
#[inline]
pub fn clever_covariate(a: f64, e: f64) -> f64 {
    a / e - (1.0 - a) / (1.0 - e)
}

/// Precomputed designs for fast per-draw moment evaluation.
///
/// `alpha` rows must match the propensity design implied by the spec (the
/// reduced design for `Selected`); `beta` rows are outcome draw rows, of which
/// the leading `n_coef` entries are the regression coefficients.
pub struct MomentEvaluator {
    y: Vec<f64>,
    a: Vec<f64>,
    ps_design: Mat,
    outcome_design_obs: Mat,
    outcome_spec: OutcomeModelSpec,
    strata: Option<usize>,
}

impl MomentEvaluator {
    pub fn new(
        d: &Dataset,
        outcome_spec: &OutcomeModelSpec,
        ps_spec: &PropensityModelSpec,
        moment: &MomentSpec,
    ) -> Result<Self> {
        moment.check(d)?;
        outcome_spec.check(d)?;
        ps_spec.check(d)?;
        let ps_design = match moment {
            MomentSpec::Selected { selected } => {
                let reduced = PropensityModelSpec {
                    design: DesignSpec {
                        covariates: selected.clone(),
                        intercept: ps_spec.design.intercept,
                    },
                    prior: ps_spec.prior,
                };
                reduced.design_matrix(d)
            }
            _ => ps_spec.design_matrix(d),
        };
        Ok(MomentEvaluator {
            y: d.y().to_vec(),
            a: d.a().iter().map(|v| f64::from(*v)).collect(),
            ps_design,
            outcome_design_obs: outcome_spec.design_matrix(d),
            outcome_spec: outcome_spec.clone(),
            strata: match moment {
                MomentSpec::Subclass { n_strata } => Some(*n_strata),
                _ => None,
            },
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn alpha_dim(&self) -> usize {
        self.ps_design.cols()
    }

    /// Number of outcome coefficients (draw columns beyond this index, such
    /// as the noise variance, are not regression coefficients).
    pub fn outcome_coef_count(&self) -> usize {
        self.outcome_spec.n_coef()
    }

    /// Moment value for one (alpha, beta-draw) pair.
    pub fn eval(&self, alpha: &[f64], beta_draw: &[f64]) -> Result<f64> {
        let mut c = ClipCounter::default();
        self.eval_counted(alpha, beta_draw, &mut c)
    }

    /// Moment value, accumulating propensity clipping counts.
    pub fn eval_counted(
        &self,
        alpha: &[f64],
        beta_draw: &[f64],
        clips: &mut ClipCounter,
    ) -> Result<f64> {
        let n = self.n();
        let k_b = self.outcome_spec.n_coef();
        if alpha.len() != self.ps_design.cols() {
            return Err(Error::Dimension("alpha length != propensity design columns".into()));
        }
        if beta_draw.len() < k_b {
            return Err(Error::Dimension("beta draw shorter than coefficient count".into()));
        }
        let coef = &beta_draw[..k_b];
        match self.strata {
            None => {
                let mut sum = 0.0;
                for i in 0..n {
                    let e = clips.clip(crate::model::expit(dot(self.ps_design.row(i), alpha)));
                    let m = self
                        .outcome_spec
                        .mean_from_eta(dot(self.outcome_design_obs.row(i), coef));
                    sum += clever_covariate(self.a[i], e) * (self.y[i] - m);
                }
                Ok(sum / n as f64)
            }
            Some(k_strata) => {
                // Rank by the (unclipped) propensity under this alpha draw,
                // ties broken by original row index.
                let mut e_vals = Vec::with_capacity(n);
                for i in 0..n {
                    e_vals.push(crate::model::expit(dot(self.ps_design.row(i), alpha)));
                }
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&i, &j| {
                    e_vals[i].partial_cmp(&e_vals[j]).unwrap().then(i.cmp(&j))
                });
                let mut sum = 0.0;
                let base = n / k_strata;
                let extra = n % k_strata;
                let mut start = 0;
                for k in 0..k_strata {
                    let size = base + usize::from(k < extra);
                    let stratum = &order[start..start + size];
                    start += size;
                    let n_k1: usize =
                        stratum.iter().filter(|&&i| self.a[i] == 1.0).count();
                    if n_k1 == 0 || n_k1 == size {
                        return Err(Error::StratumDegenerate { stratum: k + 1 });
                    }
                    let p_k = n_k1 as f64 / size as f64;
                    for &i in stratum {
                        let m = self
                            .outcome_spec
                            .mean_from_eta(dot(self.outcome_design_obs.row(i), coef));
                        let w = self.a[i] / p_k - (1.0 - self.a[i]) / (1.0 - p_k);
                        sum += w * (self.y[i] - m);
                    }
                }
                Ok(sum / n as f64)
            }
        }
    }

    /// Moment values for every row pair of two draw matrices.
    pub fn eval_all(
        &self,
        alpha: &Mat,
        beta: &Mat,
        clips: &mut ClipCounter,
    ) -> Result<Vec<f64>> {
        if alpha.rows() != beta.rows() {
            return Err(Error::Dimension("alpha and beta draw counts differ".into()));
        }
        let mut out = Vec::with_capacity(alpha.rows());
        for s in 0..alpha.rows() {
            out.push(self.eval_counted(alpha.row(s), beta.row(s), clips)?);
        }
        Ok(out)
    }
}

/// The doubly robust moment for one parameter pair.
pub fn dr_moment(
    d: &Dataset,
    alpha: &[f64],
    beta: &[f64],
    outcome_spec: &OutcomeModelSpec,
    ps_spec: &PropensityModelSpec,
) -> Result<f64> {
    MomentEvaluator::new(d, outcome_spec, ps_spec, &MomentSpec::Dr)?.eval(alpha, beta)
}

/// The selected-covariate moment: the propensity uses only `selected`
/// columns while the outcome keeps its full coefficient vector.
pub fn selected_moment(
    d: &Dataset,
    alpha_s: &[f64],
    beta: &[f64],
    selected: &[usize],
    outcome_spec: &OutcomeModelSpec,
    ps_spec: &PropensityModelSpec,
) -> Result<f64> {
    MomentEvaluator::new(
        d,
        outcome_spec,
        ps_spec,
        &MomentSpec::Selected { selected: selected.to_vec() },
    )?
    .eval(alpha_s, beta)
}

/// The subclassification moment with `n_strata` equal-frequency strata cut on
/// the propensity implied by `alpha`.
pub fn subclass_moment(
    d: &Dataset,
    alpha: &[f64],
    beta: &[f64],
    n_strata: usize,
    outcome_spec: &OutcomeModelSpec,
    ps_spec: &PropensityModelSpec,
) -> Result<f64> {
    MomentEvaluator::new(d, outcome_spec, ps_spec, &MomentSpec::Subclass { n_strata })?
        .eval(alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::model::{DesignSpec, OutcomeModelSpec, PropensityModelSpec};
    use alloc::string::String;
    use alloc::vec;

    fn names(p: usize) -> Vec<String> {
        (1..=p).map(|j| alloc::format!("x{j}")).collect()
    }

    /// Intercept-only models so e and m are constants we control.
    fn intercept_only(_d: &Dataset) -> (OutcomeModelSpec, PropensityModelSpec) {
        let mut outcome = OutcomeModelSpec::gaussian_linear(DesignSpec {
            covariates: vec![],
            intercept: true,
        });
        outcome.include_treatment_main_effect = false;
        let ps = PropensityModelSpec::logistic(DesignSpec { covariates: vec![], intercept: true });
        (outcome, ps)
    }

    #[test]
    fn clever_covariate_hand_values() {
        // n=1 style kernel checks: A=1, e=0.5, r=1 -> 2; A=1, e=0.25, r=1 -> 4
        assert!((clever_covariate(1.0, 0.5) - 2.0).abs() < 1e-15);
        assert!((clever_covariate(1.0, 0.25) - 4.0).abs() < 1e-12);
        assert!((clever_covariate(0.0, 0.5) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_residuals_give_zero_moment() {
        let d = Dataset::new(
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1, 0, 1, 0],
            Mat::from_rows(4, 1, vec![0.3, -0.2, 0.8, 0.1]),
            names(1),
            None,
        )
        .unwrap();
        let (outcome, ps) = intercept_only(&d);
        // m = 1 everywhere, y = 1 everywhere
        let b = dr_moment(&d, &[0.4], &[1.0, 1.0], &outcome, &ps).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn antisymmetric_pair_cancels() {
        // (A,e,Y,m) = (1, .5, 2, 1) and (0, .5, 2, 1): terms 2 and -2, mean 0
        let d = Dataset::new(
            vec![2.0, 2.0],
            vec![1, 0],
            Mat::from_rows(2, 1, vec![0.0, 0.0]),
            names(1),
            None,
        )
        .unwrap();
        let (outcome, ps) = intercept_only(&d);
        let b = dr_moment(&d, &[0.0], &[1.0, 1.0], &outcome, &ps).unwrap();
        assert_eq!(b, 0.0);
        // and a single treated unit alone gives 2/n with n=2 both treated?
        // keep the kernel-level value pinned instead (see clever_covariate test)
    }

    #[test]
    fn selected_full_set_equals_dr_bit_exactly() {
        let d = Dataset::new(
            vec![2.0, -1.0, 0.5, 3.0, 1.0],
            vec![1, 0, 1, 0, 1],
            Mat::from_rows(5, 2, vec![0.3, 1.0, -0.2, 2.0, 0.8, -1.0, 0.1, 0.5, 0.9, 0.2]),
            names(2),
            None,
        )
        .unwrap();
        let outcome = OutcomeModelSpec::gaussian_linear(DesignSpec::all(&d));
        let ps = PropensityModelSpec::logistic(DesignSpec::all(&d));
        let alpha = [0.2, -0.5, 0.7];
        let beta = [0.5, 1.5, -0.3, 0.2, 0.9]; // incl. sigma2 slot
        let full = dr_moment(&d, &alpha, &beta, &outcome, &ps).unwrap();
        let sel = selected_moment(&d, &alpha, &beta, &[0, 1], &outcome, &ps).unwrap();
        assert_eq!(full.to_bits(), sel.to_bits());
    }

    #[test]
    fn selected_moment_uses_reduced_propensity() {
        let d = Dataset::new(
            vec![2.0, -1.0, 0.5, 3.0],
            vec![1, 0, 1, 0],
            Mat::from_rows(4, 2, vec![0.3, 1.0, -0.2, 2.0, 0.8, -1.0, 0.1, 0.5]),
            names(2),
            None,
        )
        .unwrap();
        let outcome = OutcomeModelSpec::gaussian_linear(DesignSpec::all(&d));
        let ps = PropensityModelSpec::logistic(DesignSpec::all(&d));
        // alpha over (intercept, x2) only
        let beta = [0.0, 0.0, 0.0, 0.0, 1.0];
        let sel = selected_moment(&d, &[0.1, 0.4], &beta, &[1], &outcome, &ps).unwrap();
        // manual computation
        let mut sum = 0.0;
        for i in 0..4 {
            let e = crate::model::expit(0.1 + 0.4 * d.x().get(i, 1));
            sum += clever_covariate(f64::from(d.a()[i]), e) * d.y()[i];
        }
        assert!((sel - sum / 4.0).abs() < 1e-12);
    }

    #[test]
    fn subclass_hand_case_is_zero() {
        // two strata, each one treated and one control, all residuals 1
        let d = Dataset::new(
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1, 0, 1, 0],
            Mat::from_rows(4, 1, vec![-2.0, -1.0, 1.0, 2.0]),
            names(1),
            None,
        )
        .unwrap();
        let mut outcome = OutcomeModelSpec::gaussian_linear(DesignSpec {
            covariates: vec![],
            intercept: true,
        });
        outcome.include_treatment_main_effect = false;
        let ps = PropensityModelSpec::logistic(DesignSpec::all(&d));
        // beta -> m = 0 so residuals are 1; ps ordered by x1
        let b = subclass_moment(&d, &[0.0, 1.0], &[0.0, 1.0], 2, &outcome, &ps).unwrap();
        assert!(b.abs() < 1e-15);
    }

    #[test]
    fn subclass_rejects_one_stratum() {
        let d = Dataset::new(
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1, 0, 1, 0],
            Mat::from_rows(4, 1, vec![-2.0, -1.0, 1.0, 2.0]),
            names(1),
            None,
        )
        .unwrap();
        let (outcome, ps) = intercept_only(&d);
        assert!(matches!(
            subclass_moment(&d, &[0.0], &[0.0], 1, &outcome, &ps),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn subclass_degenerate_stratum_named() {
        // low-e stratum all control, high-e stratum all treated
        let d = Dataset::new(
            vec![1.0, 1.0, 1.0, 1.0],
            vec![0, 0, 1, 1],
            Mat::from_rows(4, 1, vec![-2.0, -1.0, 1.0, 2.0]),
            names(1),
            None,
        )
        .unwrap();
        let mut outcome = OutcomeModelSpec::gaussian_linear(DesignSpec {
            covariates: vec![],
            intercept: true,
        });
        outcome.include_treatment_main_effect = false;
        let ps = PropensityModelSpec::logistic(DesignSpec::all(&d));
        let err = subclass_moment(&d, &[0.0, 1.0], &[0.0, 1.0], 2, &outcome, &ps).unwrap_err();
        assert_eq!(err, Error::StratumDegenerate { stratum: 1 });
    }

    #[test]
    fn residual_scaling_is_exact_for_powers_of_two() {
        // with m = 0, doubling y doubles the moment bit-exactly
        let d1 = Dataset::new(
            vec![2.0, -1.0, 0.5, 3.0],
            vec![1, 0, 1, 0],
            Mat::from_rows(4, 1, vec![0.3, -0.2, 0.8, 0.1]),
            names(1),
            None,
        )
        .unwrap();
        let d2 = Dataset::new(
            vec![4.0, -2.0, 1.0, 6.0],
            vec![1, 0, 1, 0],
            Mat::from_rows(4, 1, vec![0.3, -0.2, 0.8, 0.1]),
            names(1),
            None,
        )
        .unwrap();
        let (mut outcome, ps) = intercept_only(&d1);
        outcome.include_treatment_main_effect = false;
        let b1 = dr_moment(&d1, &[0.3], &[0.0, 1.0], &outcome, &ps).unwrap();
        let b2 = dr_moment(&d2, &[0.3], &[0.0, 1.0], &outcome, &ps).unwrap();
        assert_eq!((2.0 * b1).to_bits(), b2.to_bits());
    }

    #[test]
    fn clip_counter_reports_extreme_propensities() {
        let d = Dataset::new(
            vec![1.0, 2.0],
            vec![1, 0],
            Mat::from_rows(2, 1, vec![50.0, -50.0]),
            names(1),
            None,
        )
        .unwrap();
        let outcome = OutcomeModelSpec::gaussian_linear(DesignSpec::all(&d));
        let ps = PropensityModelSpec::logistic(DesignSpec::all(&d));
        let ev = MomentEvaluator::new(&d, &outcome, &ps, &MomentSpec::Dr).unwrap();
        let mut clips = ClipCounter::default();
        ev.eval_counted(&[0.0, 2.0], &[0.0, 0.0, 0.0, 1.0], &mut clips).unwrap();
        assert_eq!(clips.total, 2);
        assert_eq!(clips.clipped, 2);
    }
}
