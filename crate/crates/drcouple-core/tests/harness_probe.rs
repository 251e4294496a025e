//! Manual probes for timing and statistical behavior; run with
//! `cargo test --release -p drcouple-core --test harness_probe -- --ignored --nocapture`.

use std::time::Instant;

use drcouple_core::simulate::{
    run_replications, Method, MisspecStyle, ScenarioSpec,
};

fn print_report(tag: &str, spec: &ScenarioSpec) {
    let t0 = Instant::now();
    let report = run_replications(spec).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("== {tag} (n={}, J={}, S={}) took {dt:.1}s", spec.n, spec.replications, spec.draws);
    for row in &report.rows {
        println!(
            "  {:>16}: abias {:.3} ese {:.3} rmse {:.3} cp {:.1} avl {:.3} (failures {})",
            row.method.name(),
            row.abias,
            row.ese,
            row.rmse,
            row.cp,
            row.avl,
            row.failures
        );
    }
}

#[test]
#[ignore]
fn probe_correct_correct() {
    let mut spec = ScenarioSpec::new(500, 20, 42);
    spec.methods = vec![Method::Proposed, Method::GFormula, Method::FreqDr, Method::Saarela];
    print_report("correct/correct", &spec);
}

#[test]
#[ignore]
fn probe_outcome_misspec() {
    let mut spec = ScenarioSpec::new(500, 20, 42);
    spec.ps_correct = true;
    spec.outcome_correct = false;
    spec.misspec_style = MisspecStyle::DropToX1;
    spec.methods = vec![Method::Proposed, Method::ProposedPruned, Method::GFormula];
    print_report("ps-correct / outcome-misspec", &spec);
}

#[test]
#[ignore]
fn probe_ps_misspec() {
    let mut spec = ScenarioSpec::new(1500, 10, 42);
    spec.ps_correct = false;
    spec.outcome_correct = true;
    spec.methods = vec![Method::Proposed, Method::FreqDr];
    print_report("ps-misspec / outcome-correct", &spec);
}

#[test]
#[ignore]
fn probe_kang_schafer_misspec() {
    let mut spec = ScenarioSpec::new(500, 10, 42);
    spec.ps_correct = true;
    spec.outcome_correct = false;
    spec.misspec_style = MisspecStyle::KangSchafer;
    spec.methods = vec![Method::Proposed, Method::ProposedPruned, Method::GFormula];
    print_report("kang-schafer outcome misspec", &spec);
}

#[test]
#[ignore]
fn probe_lemma1_large_n() {
    use drcouple_core::estimator::{ate_from_draws, ate_from_particles, summarize};
    use drcouple_core::model::{DesignSpec, OutcomeModelSpec, PropensityModelSpec};
    use drcouple_core::moment::{MomentEvaluator, MomentSpec};
    use drcouple_core::sampler::{
        sample_outcome_posterior, sample_propensity_posterior, SamplerConfig,
    };
    use drcouple_core::simulate::generate_kang_schafer;
    use drcouple_core::tilt::{solve_lambda_smc, TiltConfig};

    let t0 = Instant::now();
    let d = generate_kang_schafer(5000, 2024).unwrap();
    let outcome = OutcomeModelSpec::gaussian_linear(DesignSpec::all(&d));
    let ps = PropensityModelSpec::logistic(DesignSpec::all(&d));
    let cfg = SamplerConfig::default();
    let s = 20_000;
    let beta = sample_outcome_posterior(&d, &outcome, s, 1, &cfg).unwrap();
    let alpha = sample_propensity_posterior(&d, &ps, s, 2, &cfg).unwrap();
    let ev = MomentEvaluator::new(&d, &outcome, &ps, &MomentSpec::Dr).unwrap();
    let sys = solve_lambda_smc(&alpha, &beta, &ev, &TiltConfig { seed: 3, ..Default::default() })
        .unwrap();
    let tilted = summarize(&ate_from_particles(&sys, &d, &outcome).unwrap(), 0.95).unwrap();
    let plain = summarize(&ate_from_draws(&beta, &d, &outcome).unwrap(), 0.95).unwrap();
    println!(
        "lemma1: lambda {:.4} ess {:.0} ({:.2} of S) shift {:.4} took {:.1}s",
        sys.lambda,
        sys.ess(),
        sys.ess() / s as f64,
        (tilted.mean - plain.mean).abs(),
        t0.elapsed().as_secs_f64()
    );
}
