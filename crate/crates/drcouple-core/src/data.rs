//! Observed-data container, validation, and the covariate transforms used by
//! the benchmark.
//!
//! A [`Dataset`] holds the triplet (outcome, binary treatment, covariates) for
//! `n` units, plus optional simulation ground truth. Construction enforces the
//! structural invariants (shapes, binary treatment, finite values); semantic
//! checks such as "both arms present" are reported by [`validate`] so that a
//! defective file can be loaded, inspected and rejected with a readable
//! report.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Simulation ground truth carried alongside observed data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruthInfo {
    /// True propensity scores, strictly inside (0,1).
    pub true_ps: Option<Vec<f64>>,
    /// True average treatment effect.
    pub true_ate: Option<f64>,
    /// Potential outcomes under treatment.
    pub y1: Option<Vec<f64>>,
    /// Potential outcomes under control.
    pub y0: Option<Vec<f64>>,
}

/// Observed triplets (outcome, treatment, covariate matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    a: Vec<u8>,
    x: Mat,
    column_names: Vec<String>,
    truth: Option<TruthInfo>,
}

impl Dataset {
    /// Builds a dataset, checking shapes, treatment coding and finiteness.
    ///
    /// Treatment values must be exactly 0 or 1; `y` and `x` must be finite;
    /// `n >= 2` and `p >= 1`. Arm counts are left to [`validate`].
    pub fn new(
        y: Vec<f64>,
        a: Vec<u8>,
        x: Mat,
        column_names: Vec<String>,
        truth: Option<TruthInfo>,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::Domain(format!("need at least 2 units, got {n}")));
        }
        if a.len() != n || x.rows() != n {
            return Err(Error::Dimension(format!(
                "y has {n} rows, a has {}, x has {}",
                a.len(),
                x.rows()
            )));
        }
        if x.cols() < 1 {
            return Err(Error::Domain("need at least one covariate column".into()));
        }
        if column_names.len() != x.cols() {
            return Err(Error::Dimension(format!(
                "{} column names for {} covariate columns",
                column_names.len(),
                x.cols()
            )));
        }
        if let Some(i) = a.iter().position(|v| *v > 1) {
            return Err(Error::Domain(format!(
                "treatment value {} at row {i} is outside {{0,1}}",
                a[i]
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite outcome at row {i}")));
        }
        if !x.is_finite() {
            return Err(Error::Domain("non-finite covariate entry".into()));
        }
        if let Some(t) = &truth {
            if let Some(ps) = &t.true_ps {
                if ps.len() != n {
                    return Err(Error::Dimension("true_ps length != n".into()));
                }
                if ps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
                    return Err(Error::Domain("true_ps entries must lie strictly in (0,1)".into()));
                }
            }
            if let (Some(y1), Some(y0)) = (&t.y1, &t.y0) {
                if y1.len() != n || y0.len() != n {
                    return Err(Error::Dimension("potential outcome length != n".into()));
                }
                for i in 0..n {
                    let expected = if a[i] == 1 { y1[i] } else { y0[i] };
                    if y[i] != expected {
                        return Err(Error::Domain(format!(
                            "row {i}: y does not match the potential outcome for its arm"
                        )));
                    }
                }
            }
        }
        Ok(Dataset { y, a, x, column_names, truth })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    #[inline]
    pub fn a(&self) -> &[u8] {
        &self.a
    }

    #[inline]
    pub fn x(&self) -> &Mat {
        &self.x
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn truth(&self) -> Option<&TruthInfo> {
        self.truth.as_ref()
    }

    pub fn treated_count(&self) -> usize {
        self.a.iter().filter(|v| **v == 1).count()
    }

    /// Index of a named covariate column.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Copy of one covariate column.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.x.get(i, j)).collect()
    }

    /// Returns a dataset with extra covariate columns appended.
    pub fn with_columns(&self, names: Vec<String>, cols: Vec<Vec<f64>>) -> Result<Dataset> {
        if names.len() != cols.len() {
            return Err(Error::Dimension("names/columns count mismatch".into()));
        }
        let n = self.n();
        let p_new = self.p() + cols.len();
        let mut x = Mat::zeros(n, p_new);
        for i in 0..n {
            for j in 0..self.p() {
                x.set(i, j, self.x.get(i, j));
            }
        }
        for (k, col) in cols.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Dimension(format!("new column {k} has wrong length")));
            }
            for i in 0..n {
                x.set(i, self.p() + k, col[i]);
            }
        }
        let mut column_names = self.column_names.clone();
        column_names.extend(names);
        Dataset::new(self.y.clone(), self.a.clone(), x, column_names, self.truth.clone())
    }

    /// Replaces the covariate block wholesale, keeping y/a/truth.
    pub fn with_covariates(&self, x: Mat, column_names: Vec<String>) -> Result<Dataset> {
        Dataset::new(self.y.clone(), self.a.clone(), x, column_names, self.truth.clone())
    }
}

/// Severity of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// Outcome of [`validate`]: `ok` iff no error-severity issue.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<(Severity, String)>,
    pub treated_count: usize,
    pub control_count: usize,
}

/// Checks a dataset for problems that make estimation meaningless (one-armed
/// data, non-finite values, n too small) and for soft issues (constant
/// columns). Never fails; findings come back in the report.
pub fn validate(d: &Dataset) -> ValidationReport {
    let mut issues: Vec<(Severity, String)> = Vec::new();
    let treated = d.treated_count();
    let control = d.n() - treated;
    if d.n() < 2 {
        issues.push((Severity::Error, "fewer than 2 units".to_string()));
    }
    if treated == 0 {
        issues.push((Severity::Error, "no treated units".to_string()));
    }
    if control == 0 {
        issues.push((Severity::Error, "no control units".to_string()));
    }
    if d.y().iter().any(|v| !v.is_finite()) || !d.x().is_finite() {
        issues.push((Severity::Error, "non-finite values present".to_string()));
    }
    for j in 0..d.p() {
        let col = d.column(j);
        if col.iter().all(|v| *v == col[0]) {
            issues.push((
                Severity::Warning,
                format!("covariate column '{}' is constant", d.column_names()[j]),
            ));
        }
    }
    if d.y().iter().all(|v| *v == d.y()[0]) {
        issues.push((Severity::Warning, "outcome is constant".to_string()));
    }
    let ok = issues.iter().all(|(s, _)| *s != Severity::Error);
    ValidationReport { ok, issues, treated_count: treated, control_count: control }
}

/// Standardizes the selected covariate columns to sample mean 0 and sample
/// standard deviation 1 (denominator n-1). Other columns are untouched.
pub fn standardize_covariates(d: &Dataset, cols: &[usize]) -> Result<Dataset> {
    let n = d.n();
    let mut x = d.x().clone();
    for &j in cols {
        if j >= d.p() {
            return Err(Error::Domain(format!("column index {j} out of range")));
        }
        let col = d.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        if sd <= 0.0 {
            return Err(Error::Domain(format!(
                "column '{}' has zero variance",
                d.column_names()[j]
            )));
        }
        for i in 0..n {
            x.set(i, j, (col[i] - mean) / sd);
        }
    }
    d.with_covariates(x, d.column_names().to_vec())
}

/// The four nonlinear covariate transforms of the benchmark's severe
/// outcome-model misspecification, standardized after transformation:
/// `exp(x1/2)`, `10 + x2/(1+exp(x1))`, `(0.6 + x1*x3/25)^3`, `(20 + x1 + x4)^2`.
///
/// Requires the first four covariate columns; the result carries exactly the
/// four transformed columns (named `ks1`..`ks4`).
pub fn kang_schafer_transform(d: &Dataset) -> Result<Dataset> {
    if d.p() < 4 {
        return Err(Error::Domain(format!(
            "transform needs at least 4 covariates, got {}",
            d.p()
        )));
    }
    let n = d.n();
    let mut x = Mat::zeros(n, 4);
    for i in 0..n {
        let x1 = d.x().get(i, 0);
        let x2 = d.x().get(i, 1);
        let x3 = d.x().get(i, 2);
        let x4 = d.x().get(i, 3);
        x.set(i, 0, (x1 / 2.0).exp());
        x.set(i, 1, 10.0 + x2 / (1.0 + x1.exp()));
        let t3 = 0.6 + x1 * x3 / 25.0;
        x.set(i, 2, t3 * t3 * t3);
        let t4 = 20.0 + x1 + x4;
        x.set(i, 3, t4 * t4);
    }
    let names: Vec<String> = (1..=4).map(|k| format!("ks{k}")).collect();
    let transformed = d.with_covariates(x, names)?;
    standardize_covariates(&transformed, &[0, 1, 2, 3])
}

/// Raw (pre-standardization) transform values for one covariate row; exposed
/// for tests and row-local diagnostics.
pub fn kang_schafer_row(x1: f64, x2: f64, x3: f64, x4: f64) -> [f64; 4] {
    [
        (x1 / 2.0).exp(),
        10.0 + x2 / (1.0 + x1.exp()),
        {
            let t = 0.6 + x1 * x3 / 25.0;
            t * t * t
        },
        {
            let t = 20.0 + x1 + x4;
            t * t
        },
    ]
}
