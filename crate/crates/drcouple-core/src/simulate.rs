//! Benchmark data generator, replication runner, and summary metrics.
//!
//! The generator draws four standard-normal covariates, assigns treatment
//! with `expit(x1 - 0.5 x2 + 0.25 x3 + 0.1 x4)`, and produces potential
//! outcomes `100 + 110 a + 13.7 (2 x1 + x2 + x3 + x4) + eps`, so the true
//! ATE is 110. Misspecification either restricts a model's design to `x1` or
//! swaps in the four severe nonlinear covariate transforms.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::data::{kang_schafer_transform, Dataset, TruthInfo};
use crate::error::{Error, Result};
use crate::estimator::{saarela_bootstrap_dr, summarize, AteSummary};
use crate::glm::{fit_logistic, fit_wls};
use crate::linalg::{dot, Mat};
use crate::model::{
    expit, DesignSpec, OutcomeModelSpec, PropensityModelSpec,
};
use crate::moment::MomentSpec;
use crate::pipeline::{fit_dr_coupled, fit_gformula};
use crate::rng::{derive, streams};
use crate::sampler::SamplerConfig;
use crate::tilt::TiltConfig;

/// True ATE of the benchmark generator.
pub const TRUE_ATE: f64 = 110.0;

/// Estimation methods the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Proposed,
    ProposedPruned,
    GFormula,
    FreqDr,
    Saarela,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::ProposedPruned => "proposed-pruned",
            Method::GFormula => "g-formula",
            Method::FreqDr => "freq-dr",
            Method::Saarela => "saarela",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "proposed" => Some(Method::Proposed),
            "proposed-pruned" => Some(Method::ProposedPruned),
            "g-formula" => Some(Method::GFormula),
            "freq-dr" => Some(Method::FreqDr),
            "saarela" => Some(Method::Saarela),
            _ => None,
        }
    }
}

/// How a misspecified model is made wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MisspecStyle {
    /// Restrict the design to the intercept and `x1`.
    DropToX1,
    /// Replace the outcome design with the four nonlinear transforms.
    KangSchafer,
}

/// Which model the misspecification hits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MisspecTarget {
    Ps,
    Outcome,
    Both,
}

/// One benchmark scenario.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub n: usize,
    pub ps_correct: bool,
    pub outcome_correct: bool,
    pub misspec_style: MisspecStyle,
    /// Extra noise covariates appended to the generated data.
    pub add_irrelevant: usize,
    /// Replication count.
    pub replications: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    /// Posterior draws per replication.
    pub draws: usize,
    pub sampler: SamplerConfig,
    pub tilt: TiltConfig,
    /// Keep fraction used by the pruned variant.
    pub prune_keep_fraction: f64,
}

impl ScenarioSpec {
    pub fn new(n: usize, replications: usize, base_seed: u64) -> Self {
        ScenarioSpec {
            n,
            ps_correct: true,
            outcome_correct: true,
            misspec_style: MisspecStyle::DropToX1,
            add_irrelevant: 0,
            replications,
            base_seed,
            methods: vec![Method::Proposed, Method::GFormula, Method::FreqDr, Method::Saarela],
            draws: 5000,
            sampler: SamplerConfig::default(),
            tilt: TiltConfig::default(),
            prune_keep_fraction: 0.8,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n < 50 {
            return Err(Error::Domain("scenario needs n >= 50".into()));
        }
        if self.replications < 1 {
            return Err(Error::Domain("need at least one replication".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Domain("no methods requested".into()));
        }
        Ok(())
    }
}

/// Draws one benchmark dataset with ground truth attached.
pub fn generate_kang_schafer(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Domain("need at least 2 units".into()));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive(seed, streams::DATA_GEN));
    let mut x = Mat::zeros(n, 4);
    let mut y = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut true_ps = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    for i in 0..n {
        let x1: f64 = rng.sample(StandardNormal);
        let x2: f64 = rng.sample(StandardNormal);
        let x3: f64 = rng.sample(StandardNormal);
        let x4: f64 = rng.sample(StandardNormal);
        x.set(i, 0, x1);
        x.set(i, 1, x2);
        x.set(i, 2, x3);
        x.set(i, 3, x4);
        let e = expit(x1 - 0.5 * x2 + 0.25 * x3 + 0.1 * x4);
        true_ps.push(e);
        let ai = u8::from(rng.random::<f64>() < e);
        a.push(ai);
        let eps: f64 = rng.sample(StandardNormal);
        let base = 100.0 + 13.7 * (2.0 * x1 + x2 + x3 + x4) + eps;
        let y0i = base;
        let y1i = base + TRUE_ATE;
        y0.push(y0i);
        y1.push(y1i);
        y.push(if ai == 1 { y1i } else { y0i });
    }
    let truth = TruthInfo {
        true_ps: Some(true_ps),
        true_ate: Some(TRUE_ATE),
        y1: Some(y1),
        y0: Some(y0),
    };
    Dataset::new(
        y,
        a,
        x,
        (1..=4).map(|j| format!("x{j}")).collect(),
        Some(truth),
    )
}

/// Appends `count` irrelevant covariates `N(u_j, 1)`, `u_j ~ Unif(-1,1)`.
/// Returns the augmented dataset and the drawn column means `u_j`.
pub fn add_irrelevant_covariates(
    d: &Dataset,
    count: usize,
    seed: u64,
) -> Result<(Dataset, Vec<f64>)> {
    if count == 0 {
        return Ok((d.clone(), Vec::new()));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive(seed, streams::NOISE_COVARIATES));
    let n = d.n();
    let mut names = Vec::with_capacity(count);
    let mut cols = Vec::with_capacity(count);
    let mut u = Vec::with_capacity(count);
    for j in 0..count {
        let uj = rng.random::<f64>() * 2.0 - 1.0;
        u.push(uj);
        names.push(format!("noise{}", j + 1));
        cols.push((0..n).map(|_| uj + rng.sample::<f64, _>(StandardNormal)).collect());
    }
    Ok((d.with_columns(names, cols)?, u))
}

/// The dataset together with the two model designs a scenario implies.
#[derive(Debug, Clone)]
pub struct PreparedProblem {
    pub data: Dataset,
    pub ps_design: DesignSpec,
    pub outcome_design: DesignSpec,
}

/// Builds the (possibly misspecified) designs. `DropToX1` restricts the named
/// model to the intercept and `x1`; `KangSchafer` appends the four nonlinear
/// transforms and points the outcome design at them.
pub fn apply_misspecification(
    d: &Dataset,
    which: MisspecTarget,
    style: MisspecStyle,
) -> Result<PreparedProblem> {
    let correct: Vec<usize> = vec![0, 1, 2, 3];
    let mut data = d.clone();
    let mut ps_cols = correct.clone();
    let mut outcome_cols = correct;
    match (which, style) {
        (MisspecTarget::Ps, MisspecStyle::DropToX1) => {
            ps_cols = vec![0];
        }
        (MisspecTarget::Outcome, MisspecStyle::DropToX1) => {
            outcome_cols = vec![0];
        }
        (MisspecTarget::Both, MisspecStyle::DropToX1) => {
            ps_cols = vec![0];
            outcome_cols = vec![0];
        }
        (MisspecTarget::Outcome, MisspecStyle::KangSchafer) => {
            let transformed = kang_schafer_transform(d)?;
            let names = transformed.column_names().to_vec();
            let cols: Vec<Vec<f64>> = (0..4).map(|j| transformed.column(j)).collect();
            data = d.with_columns(names, cols)?;
            outcome_cols = (d.p()..d.p() + 4).collect();
        }
        (MisspecTarget::Ps, MisspecStyle::KangSchafer)
        | (MisspecTarget::Both, MisspecStyle::KangSchafer) => {
            return Err(Error::Domain(
                "the transform misspecification applies to the outcome model".into(),
            ));
        }
    }
    Ok(PreparedProblem {
        data,
        ps_design: DesignSpec::with_columns(ps_cols),
        outcome_design: DesignSpec::with_columns(outcome_cols),
    })
}

/// Builds the designs a scenario implies for one generated dataset. A
/// "correct" model uses exactly the generator's four covariates; appended
/// noise columns stay in the data (for selection stress tests) but never
/// enter a correct parametric design.
pub fn prepare_scenario(spec: &ScenarioSpec, d: &Dataset) -> Result<PreparedProblem> {
    let correct: Vec<usize> = (0..4.min(d.p())).collect();
    match (spec.ps_correct, spec.outcome_correct) {
        (true, true) => Ok(PreparedProblem {
            data: d.clone(),
            ps_design: DesignSpec::with_columns(correct.clone()),
            outcome_design: DesignSpec::with_columns(correct),
        }),
        (false, true) => {
            let mut p = apply_misspecification(d, MisspecTarget::Ps, spec.misspec_style)?;
            p.outcome_design = DesignSpec::with_columns(correct);
            Ok(p)
        }
        (true, false) => {
            let mut p = apply_misspecification(d, MisspecTarget::Outcome, spec.misspec_style)?;
            p.ps_design = DesignSpec::with_columns(correct);
            Ok(p)
        }
        (false, false) => apply_misspecification(d, MisspecTarget::Both, spec.misspec_style),
    }
}

/// One method's result on one replication.
#[derive(Debug, Clone)]
pub struct RepRecord {
    pub method: Method,
    pub seed: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Table-style metrics for one method.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub method: Method,
    pub abias: f64,
    pub ese: f64,
    pub rmse: f64,
    /// Coverage probability in percent.
    pub cp: f64,
    /// Average credible/confidence interval length.
    pub avl: f64,
    /// Replications that produced an estimate.
    pub used: usize,
    pub failures: usize,
}

/// Aggregates estimates and intervals against the truth.
pub fn compute_metrics(
    method: Method,
    estimates: &[f64],
    intervals: &[(f64, f64)],
    truth: f64,
) -> Result<MetricsRow> {
    if estimates.len() != intervals.len() {
        return Err(Error::Dimension("estimates and intervals differ in length".into()));
    }
    if estimates.is_empty() {
        return Err(Error::Domain("no estimates to aggregate".into()));
    }
    let j = estimates.len() as f64;
    let (mean, sd) = crate::linalg::mean_sd(estimates);
    let abias = (mean - truth).abs();
    let rmse = (estimates.iter().map(|v| (v - truth) * (v - truth)).sum::<f64>() / j).sqrt();
    let covered = intervals.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count();
    let cp = 100.0 * covered as f64 / j;
    let avl = intervals.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / j;
    Ok(MetricsRow {
        method,
        abias,
        ese: sd,
        rmse,
        cp,
        avl,
        used: estimates.len(),
        failures: 0,
    })
}

/// Per-method accumulator used while folding replications into a report:
/// estimates, intervals, and the failure count.
pub type MethodAccumulator = (Method, Vec<f64>, Vec<(f64, f64)>, usize);

/// Scenario results: one metrics row per method plus raw per-replication rows.
#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub rows: Vec<MetricsRow>,
    pub per_replication: Vec<RepRecord>,
    pub truth: f64,
}

/// Runs every requested method on one seeded replication.
pub fn run_single_replication(
    spec: &ScenarioSpec,
    j: usize,
) -> Result<Vec<(Method, Result<RepRecord>)>> {
    let rep_seed = spec.base_seed.wrapping_add(j as u64);
    let d = generate_kang_schafer(spec.n, rep_seed)?;
    let (d, _) = add_irrelevant_covariates(&d, spec.add_irrelevant, rep_seed)?;
    let problem = prepare_scenario(spec, &d)?;
    let data = &problem.data;

    let outcome_spec = OutcomeModelSpec::gaussian_linear(problem.outcome_design.clone());
    let ps_spec = PropensityModelSpec::logistic(problem.ps_design.clone());

    let mut out = Vec::with_capacity(spec.methods.len());
    for method in &spec.methods {
        let result = run_method(
            *method,
            data,
            &outcome_spec,
            &ps_spec,
            spec,
            rep_seed,
        );
        out.push((
            *method,
            result.map(|s| RepRecord {
                method: *method,
                seed: rep_seed,
                estimate: s.mean,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
            }),
        ));
    }
    Ok(out)
}

fn run_method(
    method: Method,
    data: &Dataset,
    outcome_spec: &OutcomeModelSpec,
    ps_spec: &PropensityModelSpec,
    spec: &ScenarioSpec,
    rep_seed: u64,
) -> Result<AteSummary> {
    match method {
        Method::Proposed | Method::ProposedPruned => {
            let mut tilt = spec.tilt.clone();
            if method == Method::ProposedPruned {
                tilt.prune_keep_fraction = spec.prune_keep_fraction;
            }
            let fit = fit_dr_coupled(
                data,
                outcome_spec,
                ps_spec,
                &MomentSpec::Dr,
                spec.draws,
                rep_seed,
                &spec.sampler,
                &tilt,
            )?;
            Ok(fit.summary)
        }
        Method::GFormula => {
            fit_gformula(data, outcome_spec, spec.draws, rep_seed, &spec.sampler)
        }
        Method::FreqDr => freq_dr_summary(data, outcome_spec, ps_spec),
        Method::Saarela => {
            let ap = saarela_bootstrap_dr(
                data,
                outcome_spec,
                ps_spec,
                spec.draws,
                derive(rep_seed, streams::BOOTSTRAP),
            )?;
            summarize(&ap, 0.95)
        }
    }
}

/// Maximum-likelihood nuisance fits feeding the frequentist AIPW estimate;
/// the interval is the usual normal approximation.
pub fn freq_dr_summary(
    data: &Dataset,
    outcome_spec: &OutcomeModelSpec,
    ps_spec: &PropensityModelSpec,
) -> Result<AteSummary> {
    let ps_design = ps_spec.design_matrix(data);
    let a: Vec<f64> = data.a().iter().map(|v| f64::from(*v)).collect();
    let ps_fit = fit_logistic(&ps_design, &a, None, 1e-8, 50, 1e-8)?;
    let e: Vec<f64> = (0..data.n())
        .map(|i| expit(dot(ps_design.row(i), &ps_fit.coef)))
        .collect();
    let outcome_design = outcome_spec.design_matrix(data);
    let beta = fit_wls(&outcome_design, data.y(), None, 0.0)?;
    let d1 = outcome_spec.design_matrix_at(data, Some(1));
    let d0 = outcome_spec.design_matrix_at(data, Some(0));
    let m1: Vec<f64> = (0..data.n()).map(|i| dot(d1.row(i), &beta)).collect();
    let m0: Vec<f64> = (0..data.n()).map(|i| dot(d0.row(i), &beta)).collect();
    let (est, se) = crate::estimator::frequentist_dr(data, &e, &m1, &m0)?;
    Ok(AteSummary {
        mean: est,
        ci_low: est - 1.96 * se,
        ci_high: est + 1.96 * se,
        level: 0.95,
        ess: data.n() as f64,
    })
}

/// Runs the full scenario sequentially. Failed replications are excluded
/// from the metrics but counted; more than 20% failures for any method is a
/// report-level error.
pub fn run_replications(spec: &ScenarioSpec) -> Result<SimulationReport> {
    spec.check()?;
    let mut per_method: Vec<MethodAccumulator> = spec
        .methods
        .iter()
        .map(|m| (*m, Vec::new(), Vec::new(), 0usize))
        .collect();
    let mut per_replication = Vec::new();
    for j in 1..=spec.replications {
        let results = run_single_replication(spec, j)?;
        collect_replication(results, &mut per_method, &mut per_replication);
    }
    assemble_report(spec, per_method, per_replication)
}

/// Folds one replication's outcomes into the running accumulators (shared
/// with the parallel driver in the companion crate).
pub fn collect_replication(
    results: Vec<(Method, Result<RepRecord>)>,
    per_method: &mut [MethodAccumulator],
    per_replication: &mut Vec<RepRecord>,
) {
    for (method, outcome) in results {
        let slot = per_method
            .iter_mut()
            .find(|(m, ..)| *m == method)
            .expect("method accumulator exists");
        match outcome {
            Ok(rec) => {
                slot.1.push(rec.estimate);
                slot.2.push((rec.ci_low, rec.ci_high));
                per_replication.push(rec);
            }
            Err(_) => slot.3 += 1,
        }
    }
}

/// Aggregates accumulators into the final report (shared with the parallel
/// driver in the companion crate).
pub fn assemble_report(
    spec: &ScenarioSpec,
    per_method: Vec<MethodAccumulator>,
    per_replication: Vec<RepRecord>,
) -> Result<SimulationReport> {
    let mut rows = Vec::with_capacity(per_method.len());
    for (method, estimates, intervals, failures) in per_method {
        if failures * 5 > spec.replications {
            return Err(Error::TooManyFailures { failed: failures, total: spec.replications });
        }
        let mut row = compute_metrics(method, &estimates, &intervals, TRUE_ATE)?;
        row.failures = failures;
        rows.push(row);
    }
    Ok(SimulationReport { rows, per_replication, truth: TRUE_ATE })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_unit_at_origin_has_half_propensity() {
        // expit(0) = 0.5 and the covariate term cancels in y1 - y0
        let d = generate_kang_schafer(100, 7).unwrap();
        let t = d.truth().unwrap();
        let y1 = t.y1.as_ref().unwrap();
        let y0 = t.y0.as_ref().unwrap();
        for i in 0..d.n() {
            assert!((y1[i] - y0[i] - TRUE_ATE).abs() < 1e-12);
        }
        assert_eq!(t.true_ate, Some(TRUE_ATE));
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_kang_schafer(50, 123).unwrap();
        let b = generate_kang_schafer(50, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn irrelevant_covariates_extend_p_only() {
        let d = generate_kang_schafer(60, 3).unwrap();
        let (d40, u) = add_irrelevant_covariates(&d, 40, 3).unwrap();
        assert_eq!(d40.p(), 44);
        assert_eq!(u.len(), 40);
        assert_eq!(d40.y(), d.y());
        assert_eq!(d40.a(), d.a());
        let (same, u0) = add_irrelevant_covariates(&d, 0, 3).unwrap();
        assert_eq!(same, d);
        assert!(u0.is_empty());
    }

    #[test]
    fn misspecification_shapes() {
        let d = generate_kang_schafer(50, 3).unwrap();
        let p = apply_misspecification(&d, MisspecTarget::Ps, MisspecStyle::DropToX1).unwrap();
        assert_eq!(p.ps_design.n_columns(), 2); // intercept + x1
        assert_eq!(p.outcome_design.n_columns(), 5); // intercept + x1..x4

        let p = apply_misspecification(&d, MisspecTarget::Outcome, MisspecStyle::KangSchafer)
            .unwrap();
        assert_eq!(p.outcome_design.covariates.len(), 4);
        assert_eq!(p.data.p(), 8); // originals + 4 transforms
        for &c in &p.outcome_design.covariates {
            assert!(c >= 4, "outcome design must point at the transforms");
        }

        let p = apply_misspecification(&d, MisspecTarget::Both, MisspecStyle::DropToX1).unwrap();
        assert_eq!(p.ps_design.n_columns(), 2);
        assert_eq!(p.outcome_design.n_columns(), 2);
    }

    #[test]
    fn metrics_hand_case() {
        // estimates (109, 111), truth 110: abias 0, ese sqrt(2), rmse 1
        let row = compute_metrics(
            Method::GFormula,
            &[109.0, 111.0],
            &[(108.0, 110.5), (109.0, 112.0)],
            110.0,
        )
        .unwrap();
        assert!(row.abias.abs() < 1e-12);
        assert!((row.ese - 2.0_f64.sqrt()).abs() < 1e-12);
        assert!((row.rmse - 1.0).abs() < 1e-12);
        assert!((row.cp - 100.0).abs() < 1e-12);
        assert!((row.avl - 2.75).abs() < 1e-12);
    }

    #[test]
    fn metrics_degenerate_cases() {
        let row = compute_metrics(
            Method::GFormula,
            &[110.0, 110.0, 110.0],
            &[(109.0, 111.0); 3],
            110.0,
        )
        .unwrap();
        assert_eq!(row.abias, 0.0);
        assert_eq!(row.rmse, 0.0);
        assert_eq!(row.cp, 100.0);

        let row = compute_metrics(
            Method::GFormula,
            &[111.0, 112.0],
            &[(111.5, 112.5), (113.0, 114.0)],
            110.0,
        )
        .unwrap();
        assert_eq!(row.cp, 0.0);

        // single replication: ese undefined (NaN), everything else finite
        let row = compute_metrics(Method::GFormula, &[109.0], &[(108.0, 110.0)], 110.0).unwrap();
        assert!(row.ese.is_nan());
        assert!((row.abias - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_identity_rmse_bias_variance() {
        let estimates = [108.3, 111.2, 109.9, 110.4, 112.0, 107.5];
        let intervals = [(0.0, 1.0); 6];
        let row =
            compute_metrics(Method::FreqDr, &estimates, &intervals, 110.0).unwrap();
        let j = estimates.len() as f64;
        let lhs = row.rmse * row.rmse;
        let rhs = row.abias * row.abias + row.ese * row.ese * (j - 1.0) / j;
        assert!((lhs - rhs).abs() < 1e-9, "identity violated: {lhs} vs {rhs}");
    }
}
