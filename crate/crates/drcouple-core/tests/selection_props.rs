//! Selection-pipeline properties on the benchmark generator.

use drcouple_core::data::standardize_covariates;
use drcouple_core::model::{DesignSpec, OutcomeModelSpec, PriorSpec, PropensityModelSpec};
use drcouple_core::moment::MomentSpec;
use drcouple_core::pipeline::fit_dr_coupled;
use drcouple_core::sampler::{sample_outcome_posterior, SamplerConfig};
use drcouple_core::selection::{coupled_selection, coupled_selection_with, SelectionConfig};
use drcouple_core::simulate::{add_irrelevant_covariates, generate_kang_schafer};
use drcouple_core::tilt::TiltConfig;

fn sampler() -> SamplerConfig {
    SamplerConfig { burn_in: 1000, thin: 2, ..Default::default() }
}

#[test]
fn full_selection_matches_the_plain_pipeline() {
    // no null covariates and a threshold below every coefficient: the
    // selected moment reduces to the plain one, so the two pipelines agree
    // up to Monte Carlo error
    let d = generate_kang_schafer(400, 71).unwrap();
    let s = 2000;
    let cfg = SelectionConfig {
        threshold: 1e-6,
        tilt: TiltConfig::default(),
        sampler: sampler(),
    };
    let sel = coupled_selection(&d, &cfg, s, 7).unwrap();
    assert_eq!(sel.selected.len(), 4, "all covariates selected: {:?}", sel.selected_names);

    let outcome = OutcomeModelSpec::gaussian_linear(DesignSpec::all(&d));
    let ps = PropensityModelSpec::logistic(DesignSpec::all(&d));
    let plain = fit_dr_coupled(
        &d, &outcome, &ps, &MomentSpec::Dr, s, 7, &sampler(), &TiltConfig::default(),
    )
    .unwrap();

    let sd_sel = (sel.ate.ci_high - sel.ate.ci_low) / 3.92;
    let sd_plain = (plain.summary.ci_high - plain.summary.ci_low) / 3.92;
    let se = (sd_sel * sd_sel / sel.tilt_ess + sd_plain * sd_plain / plain.tilt_ess).sqrt();
    assert!(
        (sel.ate.mean - plain.summary.mean).abs() <= 3.0 * se + 0.05,
        "selection {:.3} vs plain {:.3} (3 se {:.3})",
        sel.ate.mean,
        plain.summary.mean,
        3.0 * se
    );
}

#[test]
fn selection_stays_tight_under_noise_covariates() {
    // 4 signal + 40 noise at n=200: the shrinkage pipeline keeps the ATE
    // posterior tight and centered, while the resampling-based bootstrap
    // estimator degrades badly (or fails outright) in this regime
    let d = generate_kang_schafer(200, 72).unwrap();
    let (d, _) = add_irrelevant_covariates(&d, 40, 72).unwrap();
    let s = 2000;
    let sel = coupled_selection(
        &d,
        &SelectionConfig { sampler: sampler(), ..Default::default() },
        s,
        9,
    )
    .unwrap();
    let sd_sel = (sel.ate.ci_high - sel.ate.ci_low) / 3.92;
    assert!(sd_sel < 5.0, "selection sd {sd_sel:.3}");
    assert!((sel.ate.mean - 110.0).abs() < 2.0, "selection mean {:.3}", sel.ate.mean);

    let outcome = OutcomeModelSpec::gaussian_linear(DesignSpec::all(&d));
    let ps = PropensityModelSpec::logistic(DesignSpec::all(&d));
    match drcouple_core::estimator::saarela_bootstrap_dr(&d, &outcome, &ps, 200, 11) {
        Err(_) => {} // widespread fit failures already demonstrate the point
        Ok(ap) => {
            let mean = ap.draws.iter().sum::<f64>() / ap.draws.len() as f64;
            let sd = (ap.draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (ap.draws.len() as f64 - 1.0))
                .sqrt();
            assert!(
                sd_sel < sd,
                "selection sd {sd_sel:.3} must beat the bootstrap sd {sd:.3}"
            );
        }
    }
}

#[test]
fn dropping_a_strong_confounder_hurts() {
    // forcing the selection to miss x1 (the strongest confounder) must give
    // larger bias than the correct full selection, pairwise on one seed
    let d = generate_kang_schafer(500, 73).unwrap();
    let d_std = standardize_covariates(&d, &[0, 1, 2, 3]).unwrap();
    let s = 2000;
    let mut outcome = OutcomeModelSpec::gaussian_linear(DesignSpec::all(&d_std));
    outcome.prior = PriorSpec::Horseshoe;
    let ps = PropensityModelSpec {
        design: DesignSpec::all(&d_std),
        prior: PriorSpec::Horseshoe,
    };
    let beta = sample_outcome_posterior(&d_std, &outcome, s, 5, &sampler()).unwrap();
    let cfg = SelectionConfig { sampler: sampler(), ..Default::default() };

    let run = |selected: Vec<usize>| {
        coupled_selection_with(&d, &d_std, &outcome, &ps, &beta, selected, &cfg, s, 5)
            .unwrap()
            .ate
            .mean
    };
    let full = run(vec![0, 1, 2, 3]);
    let missing_x1 = run(vec![1, 2, 3]);
    let bias_full = (full - 110.0).abs();
    let bias_missing = (missing_x1 - 110.0).abs();
    assert!(
        bias_missing >= bias_full - 0.05,
        "dropping x1 should not help: full {bias_full:.3} vs missing {bias_missing:.3}"
    );
}
