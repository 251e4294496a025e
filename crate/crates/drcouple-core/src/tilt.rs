//! Solvers for the tilting parameter: exponential reweighting of the joint
//! posterior draws so the doubly robust moment has zero weighted mean.
//!
//! Two routes are provided. Importance sampling ties weights
//! `exp(lambda * B_s)` to the original draws and finds `lambda` by
//! Newton-Raphson (the mean map is strictly increasing in `lambda`, so a
//! bisection fallback is always safe when a sign change exists). The
//! sequential Monte Carlo route walks a linear `lambda` schedule with
//! reweight / multinomial-resample / kernel-smooth steps so the particle
//! cloud tracks the tilted target even when plain importance weights would
//! degenerate; a terminal Newton polish on the final cloud lands the
//! constraint inside the stated tolerance rather than on a grid point.
//!
//! Pruning replaces the tilt walk with a truncation climb:
//! the constraint is met by discarding low-weight particles and regenerating
//! outcome coordinates against fresh pairings of the propensity draws. A
//! large tilt satisfies the moment partly by distorting the propensity
//! block, which is exactly the residual-bias mechanism under outcome
//! misspecification; the climb removes that bias by never letting the
//! propensity marginal move.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result, Warning};
use crate::linalg::{sample_covariance, Cholesky, Mat};
use crate::model::ClipCounter;
use crate::moment::MomentEvaluator;
use crate::sampler::{normalize_log_weights, DrawSet};

/// Which solver couples the posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiltMethod {
    Importance,
    Smc,
}

/// Tilting solver configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltConfig {
    pub method: TiltMethod,
    /// Absolute part of the stopping tolerance on |weighted mean moment|.
    pub tol_abs: f64,
    /// Relative part, scaled by the standard deviation of the moment values.
    pub tol_rel: f64,
    /// Newton-Raphson iteration cap.
    pub max_iter: usize,
    /// Kernel-smoothing coefficient `a` in (0,1].
    pub smoothing: f64,
    /// Magnitude bound for the lambda schedule.
    pub lambda_bar: f64,
    /// Number of schedule steps T.
    pub steps: usize,
    /// Fraction of particles kept when pruning (1.0 = off).
    pub prune_keep_fraction: f64,
    /// ESS fraction above which the SMC accepts an early Newton polish.
    pub polish_ess_fraction: f64,
    pub seed: u64,
}

impl Default for TiltConfig {
    fn default() -> Self {
        TiltConfig {
            method: TiltMethod::Smc,
            tol_abs: 1e-8,
            tol_rel: 1e-4,
            max_iter: 100,
            smoothing: 0.99,
            lambda_bar: 50.0,
            steps: 200,
            prune_keep_fraction: 1.0,
            polish_ess_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TiltConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.tol_abs > 0.0) || self.tol_rel < 0.0 {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(Error::Domain("smoothing coefficient must lie in (0,1]".into()));
        }
        if !(self.lambda_bar > 0.0) {
            return Err(Error::Domain("lambda_bar must be positive".into()));
        }
        if self.steps < 1 {
            return Err(Error::Domain("need at least one schedule step".into()));
        }
        if !(self.prune_keep_fraction > 0.0 && self.prune_keep_fraction <= 1.0) {
            return Err(Error::Domain("prune keep fraction must lie in (0,1]".into()));
        }
        Ok(())
    }

    fn tolerance(&self, moment_sd: f64) -> f64 {
        let sd = if moment_sd.is_finite() { moment_sd } else { 0.0 };
        self.tol_abs + self.tol_rel * sd
    }
}

/// What happened at one solver step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiltEvent {
    Init,
    Step,
    Prune,
    Polish,
    Converged,
}

/// One history record: step index, lambda, weighted mean moment, ESS.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub t: usize,
    pub lambda: f64,
    pub mean_moment: f64,
    pub ess: f64,
    pub event: TiltEvent,
}

/// Joint (alpha, beta) particles with weights and tilting diagnostics.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    alpha: Mat,
    beta: Mat,
    weights: Vec<f64>,
    pub lambda: f64,
    moment_values: Vec<f64>,
    ess: f64,
    pub history: Vec<HistoryRecord>,
    pub warnings: Vec<Warning>,
    pub clip: ClipCounter,
}

impl ParticleSystem {
    fn new(
        alpha: Mat,
        beta: Mat,
        mut weights: Vec<f64>,
        lambda: f64,
        moment_values: Vec<f64>,
        history: Vec<HistoryRecord>,
        clip: ClipCounter,
    ) -> Result<Self> {
        let s = alpha.rows();
        if beta.rows() != s || weights.len() != s || moment_values.len() != s {
            return Err(Error::Dimension("particle system fields disagree on S".into()));
        }
        if moment_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite moment value".into()));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && (sum - 1.0).abs() < 1e-9) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Domain("weights must form a simplex".into()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        let ess = effective_sample_size(&weights);
        Ok(ParticleSystem {
            alpha,
            beta,
            weights,
            lambda,
            moment_values,
            ess,
            history,
            warnings: Vec::new(),
            clip,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn alpha(&self) -> &Mat {
        &self.alpha
    }

    pub fn beta(&self) -> &Mat {
        &self.beta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn moment_values(&self) -> &[f64] {
        &self.moment_values
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    /// Weighted mean of the moment values (the solved constraint residual).
    pub fn mean_moment(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.moment_values)
            .map(|(w, b)| w * b)
            .sum()
    }
}

/// `1 / sum(w^2)`: the equivalent number of unweighted samples.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    if sq > 0.0 {
        1.0 / sq
    } else {
        0.0
    }
}

/// The lambda schedule `(0, ±lambda_bar/T, ..., ±lambda_bar)`: ascending when
/// the moment mean at lambda=0 is negative, descending when positive, and
/// just `(0)` when it is exactly zero.
pub fn lambda_schedule(initial_moment_mean: f64, lambda_bar: f64, steps: usize) -> Vec<f64> {
    if initial_moment_mean == 0.0 {
        return vec![0.0];
    }
    let sign = if initial_moment_mean < 0.0 { 1.0 } else { -1.0 };
    (0..=steps)
        .map(|t| sign * lambda_bar * t as f64 / steps as f64)
        .collect()
}

/// Weighted mean of `b` under weights `∝ w0 * exp(lambda * b)`, with the
/// summation shifted by the max exponent. Returns (mean, log-weights).
fn tilted_mean(b: &[f64], log_w0: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let lw: Vec<f64> = b
        .iter()
        .zip(log_w0)
        .map(|(bs, l0)| l0 + lambda * bs)
        .collect();
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for (bs, l) in b.iter().zip(&lw) {
        let w = (l - max).exp();
        num += w * bs;
        den += w;
    }
    (num / den, lw)
}

/// Newton-Raphson for the root of the tilted-mean map, with the divergence
/// guard falling back to bisection on `[-lambda_bar, lambda_bar]`.
///
/// Returns `(lambda, normalized weights, history)`.
pub fn solve_tilt_weights(
    b: &[f64],
    log_w0: Option<&[f64]>,
    lambda_start: f64,
    cfg: &TiltConfig,
) -> Result<(f64, Vec<f64>, Vec<HistoryRecord>)> {
    let s = b.len();
    let uniform = vec![0.0; s];
    let log_w0 = log_w0.unwrap_or(&uniform);
    let (_, sd) = crate::linalg::mean_sd(b);
    let tol = cfg.tolerance(sd);
    let mut history = Vec::new();

    let (mean0, lw0) = tilted_mean(b, log_w0, lambda_start);
    let w_start = normalize_log_weights(&lw0);
    history.push(HistoryRecord {
        t: 0,
        lambda: lambda_start,
        mean_moment: mean0,
        ess: effective_sample_size(&w_start),
        event: TiltEvent::Init,
    });
    if mean0.abs() <= tol {
        return Ok((lambda_start, w_start, history));
    }

    let b_min = b.iter().cloned().fold(f64::INFINITY, f64::min);
    let b_max = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if b_min >= 0.0 || b_max <= 0.0 {
        return Err(Error::InfeasibleConstraint { mean_moment: mean0 });
    }

    let mut lambda = lambda_start;
    for it in 1..=cfg.max_iter {
        // shifted Newton step: g/g' with g = sum w0 e^{l b} b, g' = ... b^2
        let lw: Vec<f64> = b
            .iter()
            .zip(log_w0)
            .map(|(bs, l0)| l0 + lambda * bs)
            .collect();
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut g = 0.0;
        let mut gp = 0.0;
        for (bs, l) in b.iter().zip(&lw) {
            let w = (l - max).exp();
            g += w * bs;
            gp += w * bs * bs;
        }
        lambda -= g / gp;

        if !lambda.is_finite() || (lambda - lambda_start).abs() > 10.0 * cfg.lambda_bar {
            return bisect_tilt(b, log_w0, lambda_start, tol, cfg, history);
        }
        let (mean, lw_new) = tilted_mean(b, log_w0, lambda);
        let w = normalize_log_weights(&lw_new);
        history.push(HistoryRecord {
            t: it,
            lambda,
            mean_moment: mean,
            ess: effective_sample_size(&w),
            event: TiltEvent::Step,
        });
        if mean.abs() <= tol {
            return Ok((lambda, w, history));
        }
    }
    let (residual, _) = tilted_mean(b, log_w0, lambda);
    Err(Error::NonConvergence { lambda, residual })
}

/// Bisection on the strictly increasing tilted-mean map over
/// `lambda_start ± lambda_bar`.
fn bisect_tilt(
    b: &[f64],
    log_w0: &[f64],
    lambda_start: f64,
    tol: f64,
    cfg: &TiltConfig,
    mut history: Vec<HistoryRecord>,
) -> Result<(f64, Vec<f64>, Vec<HistoryRecord>)> {
    let mut lo = lambda_start - cfg.lambda_bar;
    let mut hi = lambda_start + cfg.lambda_bar;
    let (mean_lo, _) = tilted_mean(b, log_w0, lo);
    let (mean_hi, _) = tilted_mean(b, log_w0, hi);
    if mean_lo > 0.0 || mean_hi < 0.0 {
        let (residual, _) = tilted_mean(b, log_w0, lambda_start);
        return Err(Error::NonConvergence { lambda: lambda_start, residual });
    }
    let mut t = history.last().map_or(0, |h| h.t);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (mean, lw) = tilted_mean(b, log_w0, mid);
        t += 1;
        if mean.abs() <= tol || (hi - lo) < 1e-14 * (1.0 + mid.abs()) {
            let w = normalize_log_weights(&lw);
            history.push(HistoryRecord {
                t,
                lambda: mid,
                mean_moment: mean,
                ess: effective_sample_size(&w),
                event: TiltEvent::Step,
            });
            return Ok((mid, w, history));
        }
        if mean < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let (residual, _) = tilted_mean(b, log_w0, mid);
    Err(Error::NonConvergence { lambda: mid, residual })
}

fn combined_log_w0(alpha: &DrawSet, beta: &DrawSet) -> Vec<f64> {
    alpha
        .log_weights()
        .iter()
        .zip(beta.log_weights())
        .map(|(a, b)| a + b)
        .collect()
}

/// Importance-sampling solution: pairs the draws row-wise, solves for
/// lambda by Newton-Raphson, and returns the system with weights
/// `∝ exp(lambda B_s)`.
pub fn solve_lambda_is(
    alpha: &DrawSet,
    beta: &DrawSet,
    evaluator: &MomentEvaluator,
    cfg: &TiltConfig,
) -> Result<ParticleSystem> {
    cfg.check()?;
    if alpha.len() != beta.len() {
        return Err(Error::Dimension("alpha and beta draw counts differ".into()));
    }
    let mut clip = ClipCounter::default();
    let b = evaluator.eval_all(alpha.draws(), beta.draws(), &mut clip)?;
    let log_w0 = combined_log_w0(alpha, beta);
    let (lambda, weights, history) = solve_tilt_weights(&b, Some(&log_w0), 0.0, cfg)?;
    let mut ps = ParticleSystem::new(
        alpha.draws().clone(),
        beta.draws().clone(),
        weights,
        lambda,
        b,
        history,
        clip,
    )?;
    let s = ps.len() as f64;
    if ps.ess() < 0.01 * s {
        ps.warnings.push(Warning::DegenerateTiltWeights { ess: ps.ess(), particles: ps.len() });
    }
    Ok(ps)
}

/// Multinomial resampling: draws `count` indices from the weight simplex.
fn multinomial_indices(rng: &mut Xoshiro256PlusPlus, weights: &[f64], count: usize) -> Vec<usize> {
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cum.push(acc);
    }
    let total = acc;
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            match cum.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(i) | Err(i) => i.min(weights.len() - 1),
            }
        })
        .collect()
}

/// Minimum particles a pruning step must retain (for realistically sized
/// systems; tiny systems may keep down to half).
const MIN_RETAINED: usize = 50;

fn check_retained(s: usize, retained: usize) -> Result<()> {
    let floor = MIN_RETAINED.min(s.div_ceil(2));
    if retained < floor {
        return Err(Error::Domain(alloc::format!(
            "pruning would retain {retained} of {s} particles (floor {floor})"
        )));
    }
    Ok(())
}

/// Discards the lowest-weight particles, keeping `ceil(keep_fraction * S)`,
/// and renormalizes. The pruning event is appended to the history.
pub fn prune_particles(ps: &ParticleSystem, keep_fraction: f64) -> Result<ParticleSystem> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Domain("keep fraction must lie in (0,1]".into()));
    }
    if keep_fraction == 1.0 {
        return Ok(ps.clone());
    }
    let s = ps.len();
    let retained = ((keep_fraction * s as f64).ceil() as usize).min(s);
    check_retained(s, retained)?;

    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&i, &j| {
        ps.weights[j].partial_cmp(&ps.weights[i]).unwrap().then(i.cmp(&j))
    });
    order.truncate(retained);
    order.sort_unstable();

    let mut alpha = Mat::zeros(retained, ps.alpha.cols());
    let mut beta = Mat::zeros(retained, ps.beta.cols());
    let mut weights = Vec::with_capacity(retained);
    let mut moments = Vec::with_capacity(retained);
    for (row, &i) in order.iter().enumerate() {
        alpha.row_mut(row).copy_from_slice(ps.alpha.row(i));
        beta.row_mut(row).copy_from_slice(ps.beta.row(i));
        weights.push(ps.weights[i]);
        moments.push(ps.moment_values[i]);
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);

    let mut history = ps.history.clone();
    let t = history.last().map_or(0, |h| h.t);
    let mean_moment: f64 = weights.iter().zip(&moments).map(|(w, b)| w * b).sum();
    history.push(HistoryRecord {
        t,
        lambda: ps.lambda,
        mean_moment,
        ess: effective_sample_size(&weights),
        event: TiltEvent::Prune,
    });
    let mut out =
        ParticleSystem::new(alpha, beta, weights, ps.lambda, moments, history, ps.clip)?;
    out.warnings = ps.warnings.clone();
    Ok(out)
}

/// Sequential Monte Carlo solution of the tilting constraint.
///
/// Coordinates listed in `frozen_beta` (plus any non-coefficient trailing
/// columns such as the noise variance) ride along with their resampled
/// lineage: smoothing never perturbs them.
pub fn solve_lambda_smc_masked(
    alpha: &DrawSet,
    beta: &DrawSet,
    evaluator: &MomentEvaluator,
    cfg: &TiltConfig,
    frozen_beta: &[usize],
) -> Result<ParticleSystem> {
    cfg.check()?;
    let s = alpha.len();
    if s != beta.len() {
        return Err(Error::Dimension("alpha and beta draw counts differ".into()));
    }
    if s < 100 {
        return Err(Error::Domain("SMC needs at least 100 particles".into()));
    }
    let k_b = beta.dim();
    let n_coef = evaluator.outcome_coef_count();
    let beta_active: Vec<usize> = (0..k_b)
        .filter(|j| *j < n_coef && !frozen_beta.contains(j))
        .collect();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let mut clip = ClipCounter::default();

    let mut alpha_p = alpha.draws().clone();
    let mut beta_p = beta.draws().clone();

    // Non-uniform input weights (e.g. a sensitivity reweight) enter through
    // one initial resampling pass.
    let log_w0 = combined_log_w0(alpha, beta);
    if log_w0.iter().any(|v| (v - log_w0[0]).abs() > 1e-12) {
        let w0 = normalize_log_weights(&log_w0);
        let idx = multinomial_indices(&mut rng, &w0, s);
        let (a_new, b_new) = gather(&alpha_p, &beta_p, &idx);
        alpha_p = a_new;
        beta_p = b_new;
    }

    let mut b_vals = evaluator.eval_all(&alpha_p, &beta_p, &mut clip)?;
    let (mean0, sd0) = crate::linalg::mean_sd(&b_vals);
    let tol = cfg.tolerance(sd0);
    let mut history = vec![HistoryRecord {
        t: 0,
        lambda: 0.0,
        mean_moment: mean0,
        ess: s as f64,
        event: TiltEvent::Init,
    }];

    if mean0.abs() <= tol {
        history.push(HistoryRecord {
            t: 0,
            lambda: 0.0,
            mean_moment: mean0,
            ess: s as f64,
            event: TiltEvent::Converged,
        });
        return ParticleSystem::new(
            alpha_p,
            beta_p,
            vec![1.0 / s as f64; s],
            0.0,
            b_vals,
            history,
            clip,
        );
    }

    // Pruned solves replace the tilt walk with the truncation climb: the
    // constraint is met by discarding low-weight particles and regenerating
    // outcome coordinates, so no large tilt ever distorts the propensity
    // marginal.
    if cfg.prune_keep_fraction < 1.0 {
        return refine_pruned(
            alpha_p, beta_p, b_vals, evaluator, cfg, &beta_active, &mut rng, history, clip,
        );
    }

    let schedule = lambda_schedule(mean0, cfg.lambda_bar, cfg.steps);
    let ess_floor = (cfg.polish_ess_fraction * s as f64).max(1.0);
    let mut prev_mean = mean0;

    for t in 1..schedule.len() {
        let lambda_prev = schedule[t - 1];
        let lambda_t = schedule[t];

        // Try to finish from the current cloud by importance polish: accept
        // when Newton converges with a healthy implied ESS.
        if let Ok((lambda_star, weights, _)) =
            solve_tilt_weights(&b_vals, None, lambda_prev, cfg)
        {
            if effective_sample_size(&weights) >= ess_floor {
                return finish_polished(
                    alpha_p, beta_p, weights, lambda_star, b_vals, history, clip, t - 1,
                );
            }
        }

        // (1) incremental reweight
        let delta = lambda_t - lambda_prev;
        let lw: Vec<f64> = b_vals.iter().map(|b| delta * b).collect();
        let w = normalize_log_weights(&lw);
        let ess_t = effective_sample_size(&w);

        // (2) multinomial resampling
        let idx = multinomial_indices(&mut rng, &w, s);
        let (alpha_re, beta_re) = gather(&alpha_p, &beta_p, &idx);

        // (3) kernel smoothing towards the pre-resampling cloud
        let alpha_active: Vec<usize> = (0..alpha_p.cols()).collect();
        let (alpha_new, beta_new) = smooth(
            &alpha_p, &beta_p, &alpha_re, &beta_re, &alpha_active, &beta_active,
            cfg.smoothing, &mut rng,
        )?;
        alpha_p = alpha_new;
        beta_p = beta_new;

        // (4) constraint evaluation
        b_vals = evaluator.eval_all(&alpha_p, &beta_p, &mut clip)?;
        let mean_t = b_vals.iter().sum::<f64>() / s as f64;
        history.push(HistoryRecord {
            t,
            lambda: lambda_t,
            mean_moment: mean_t,
            ess: ess_t,
            event: TiltEvent::Step,
        });

        if mean_t.abs() <= tol {
            history.push(HistoryRecord {
                t,
                lambda: lambda_t,
                mean_moment: mean_t,
                ess: s as f64,
                event: TiltEvent::Converged,
            });
            return ParticleSystem::new(
                alpha_p,
                beta_p,
                vec![1.0 / s as f64; s],
                lambda_t,
                b_vals,
                history,
                clip,
            );
        }

        // The mean crossed zero between grid points: polish within the
        // bracket regardless of the ESS floor (the offset is at most one
        // schedule increment, so the weights stay mild).
        if mean_t.signum() != prev_mean.signum() {
            let (lambda_star, weights, _) = solve_tilt_weights(&b_vals, None, lambda_t, cfg)?;
            return finish_polished(
                alpha_p, beta_p, weights, lambda_star, b_vals, history, clip, t,
            );
        }
        prev_mean = mean_t;
    }

    let residual = b_vals.iter().sum::<f64>() / s as f64;
    Err(Error::NonConvergence { lambda: *schedule.last().unwrap(), residual })
}

/// The pruning variant of the solve. Instead of tilting the joint draws,
/// each generation discards the `1 - keep_fraction` of particles whose
/// moment values sit deepest on the deficient side (the ones whose tilt
/// weights would be smallest), resamples, and regenerates the outcome
/// coordinates by kernel smoothing. Two rules keep the propensity block
/// honest: its coordinates are never smoothed, and the pairing between
/// propensity draws and outcome particles is refreshed uniformly at random
/// every generation (the two blocks are independent in the starting
/// posterior, so any pairing is valid). Selection pressure therefore cannot
/// lean on favorable propensity draws, and the constraint is met by moving
/// the outcome block alone. Terminates when the cloud mean reaches the
/// tolerance or crosses zero (followed by a mild weight polish).
#[allow(clippy::too_many_arguments)]
fn refine_pruned(
    alpha_p: Mat,
    mut beta_p: Mat,
    mut b_vals: Vec<f64>,
    evaluator: &MomentEvaluator,
    cfg: &TiltConfig,
    beta_active: &[usize],
    rng: &mut Xoshiro256PlusPlus,
    mut history: Vec<HistoryRecord>,
    mut clip: ClipCounter,
) -> Result<ParticleSystem> {
    let s = b_vals.len();
    let retained = ((cfg.prune_keep_fraction * s as f64).ceil() as usize).min(s);
    check_retained(s, retained)?;

    let (mean0, sd0) = crate::linalg::mean_sd(&b_vals);
    let tol = cfg.tolerance(sd0);
    let climb_up = mean0 < 0.0;
    let mut prev_mean = mean0;
    let mut alpha_cur = alpha_p.clone();
    for t in 1..=cfg.steps {
        // select survivors on the current pairing
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&i, &j| {
            let key = |v: f64| if climb_up { -v } else { v };
            key(b_vals[i]).partial_cmp(&key(b_vals[j])).unwrap().then(i.cmp(&j))
        });
        let mut w = vec![0.0; s];
        for &i in order.iter().take(retained) {
            w[i] = 1.0 / retained as f64;
        }
        history.push(HistoryRecord {
            t,
            lambda: 0.0,
            mean_moment: prev_mean,
            ess: effective_sample_size(&w),
            event: TiltEvent::Prune,
        });
        let idx = multinomial_indices(rng, &w, s);
        let (_, beta_re) = gather(&alpha_cur, &beta_p, &idx);
        let (_, beta_new) = smooth(
            &alpha_cur, &beta_p, &alpha_cur, &beta_re, &[], beta_active, cfg.smoothing, rng,
        )?;
        beta_p = beta_new;

        // refresh the propensity pairing from its own posterior sample
        let perm = random_permutation(rng, s);
        let mut alpha_next = Mat::zeros(s, alpha_p.cols());
        for (row, &i) in perm.iter().enumerate() {
            alpha_next.row_mut(row).copy_from_slice(alpha_p.row(i));
        }
        alpha_cur = alpha_next;

        b_vals = evaluator.eval_all(&alpha_cur, &beta_p, &mut clip)?;
        let (mean_t, _) = crate::linalg::mean_sd(&b_vals);

        if mean_t.abs() <= tol || mean_t.signum() != prev_mean.signum() {
            // The coarse climb overshoots by up to one generation's drift;
            // settle with gentle alternating selection before polishing.
            return balance_pruned(
                alpha_p, alpha_cur, beta_p, b_vals, evaluator, cfg, beta_active, rng,
                history, clip, t, sd0,
            );
        }
        prev_mean = mean_t;
    }
    Err(Error::NonConvergence { lambda: 0.0, residual: prev_mean })
}

/// Post-crossing settling for the pruned solve: tiny one-sided truncations
/// against the current sign of the mean moment until it sits within a small
/// fraction of the original spread, then a mild weight polish.
#[allow(clippy::too_many_arguments)]
fn balance_pruned(
    alpha_pool: Mat,
    mut alpha_cur: Mat,
    mut beta_p: Mat,
    mut b_vals: Vec<f64>,
    evaluator: &MomentEvaluator,
    cfg: &TiltConfig,
    beta_active: &[usize],
    rng: &mut Xoshiro256PlusPlus,
    mut history: Vec<HistoryRecord>,
    mut clip: ClipCounter,
    t_start: usize,
    sd0: f64,
) -> Result<ParticleSystem> {
    let s = b_vals.len();
    let tol = cfg.tolerance(sd0);
    let settle_tol = (0.02 * sd0).max(tol);
    const MAX_SETTLE: usize = 60;

    let mut t = t_start;
    for _ in 0..MAX_SETTLE {
        let (mean_g, sd_g) = crate::linalg::mean_sd(&b_vals);
        if mean_g.abs() <= settle_tol {
            break;
        }
        // proportional truncation: remove just enough of the heavy side
        let drop = (0.5 * mean_g.abs() / sd_g.max(1e-12)).min(0.2);
        let retained = ((s as f64 * (1.0 - drop)).ceil() as usize).clamp(1, s);
        if retained == s {
            break;
        }
        let climb_up = mean_g > 0.0; // drop the high side when mean is high
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&i, &j| {
            let key = |v: f64| if climb_up { v } else { -v };
            key(b_vals[i]).partial_cmp(&key(b_vals[j])).unwrap().then(i.cmp(&j))
        });
        let mut w = vec![0.0; s];
        for &i in order.iter().take(retained) {
            w[i] = 1.0 / retained as f64;
        }
        t += 1;
        history.push(HistoryRecord {
            t,
            lambda: 0.0,
            mean_moment: mean_g,
            ess: effective_sample_size(&w),
            event: TiltEvent::Prune,
        });
        let idx = multinomial_indices(rng, &w, s);
        let (_, beta_re) = gather(&alpha_cur, &beta_p, &idx);
        let (_, beta_new) = smooth(
            &alpha_cur, &beta_p, &alpha_cur, &beta_re, &[], beta_active, cfg.smoothing, rng,
        )?;
        beta_p = beta_new;
        let perm = random_permutation(rng, s);
        let mut alpha_next = Mat::zeros(s, alpha_pool.cols());
        for (row, &i) in perm.iter().enumerate() {
            alpha_next.row_mut(row).copy_from_slice(alpha_pool.row(i));
        }
        alpha_cur = alpha_next;
        b_vals = evaluator.eval_all(&alpha_cur, &beta_p, &mut clip)?;
    }
    let (lambda_hat, weights, _) = solve_tilt_weights(&b_vals, None, 0.0, cfg)?;
    finish_polished(alpha_cur, beta_p, weights, lambda_hat, b_vals, history, clip, t)
}

/// Fisher-Yates permutation of `0..s`.
fn random_permutation(rng: &mut Xoshiro256PlusPlus, s: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..s).collect();
    for i in (1..s).rev() {
        let j = (rng.random::<f64>() * (i + 1) as f64) as usize;
        p.swap(i, j.min(i));
    }
    p
}

#[allow(clippy::too_many_arguments)]
fn finish_polished(
    alpha: Mat,
    beta: Mat,
    weights: Vec<f64>,
    lambda: f64,
    b_vals: Vec<f64>,
    mut history: Vec<HistoryRecord>,
    clip: ClipCounter,
    t: usize,
) -> Result<ParticleSystem> {
    let mean: f64 = weights.iter().zip(&b_vals).map(|(w, b)| w * b).sum();
    let ess = effective_sample_size(&weights);
    history.push(HistoryRecord { t, lambda, mean_moment: mean, ess, event: TiltEvent::Polish });
    let s = weights.len();
    let mut ps = ParticleSystem::new(alpha, beta, weights, lambda, b_vals, history, clip)?;
    if ps.ess() < 0.01 * s as f64 {
        ps.warnings.push(Warning::DegenerateTiltWeights { ess: ps.ess(), particles: s });
    }
    Ok(ps)
}

fn gather(alpha: &Mat, beta: &Mat, idx: &[usize]) -> (Mat, Mat) {
    let mut a = Mat::zeros(idx.len(), alpha.cols());
    let mut b = Mat::zeros(idx.len(), beta.cols());
    for (row, &i) in idx.iter().enumerate() {
        a.row_mut(row).copy_from_slice(alpha.row(i));
        b.row_mut(row).copy_from_slice(beta.row(i));
    }
    (a, b)
}

/// Liu-West style shrinkage: `new = a*resampled + (1-a)*mean + eps`,
/// `eps ~ N(0, (1-a^2) * cov)`, where mean and cov come from the
/// pre-resampling cloud. Coordinates outside the active sets are copied
/// through from the resampled particles.
#[allow(clippy::too_many_arguments)]
fn smooth(
    alpha_prev: &Mat,
    beta_prev: &Mat,
    alpha_re: &Mat,
    beta_re: &Mat,
    alpha_active: &[usize],
    beta_active: &[usize],
    a: f64,
    rng: &mut Xoshiro256PlusPlus,
) -> Result<(Mat, Mat)> {
    let s = alpha_re.rows();
    let k_a = alpha_active.len();
    let dim = k_a + beta_active.len();

    if a == 1.0 || dim == 0 {
        return Ok((alpha_re.clone(), beta_re.clone()));
    }

    // Joint cloud over the active coordinates.
    let mut joint = Mat::zeros(alpha_prev.rows(), dim);
    for i in 0..alpha_prev.rows() {
        let row = joint.row_mut(i);
        for (c, &j) in alpha_active.iter().enumerate() {
            row[c] = alpha_prev.get(i, j);
        }
        for (c, &j) in beta_active.iter().enumerate() {
            row[k_a + c] = beta_prev.get(i, j);
        }
    }
    let means = crate::linalg::col_means(&joint);
    let cov = sample_covariance(&joint);
    let chol = Cholesky::new_with_jitter(&cov, 1e-10).map_err(|_| {
        Error::Linalg("smoothing covariance is not positive semidefinite".into())
    })?;

    let noise_scale = (1.0 - a * a).sqrt();
    let mut alpha_new = alpha_re.clone();
    let mut beta_new = beta_re.clone();
    let mut z = vec![0.0; dim];
    for i in 0..s {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let eps = chol.lower_matvec(&z);
        for (c, &j) in alpha_active.iter().enumerate() {
            let v = a * alpha_re.get(i, j) + (1.0 - a) * means[c] + noise_scale * eps[c];
            alpha_new.set(i, j, v);
        }
        for (c, &j) in beta_active.iter().enumerate() {
            let v = a * beta_re.get(i, j)
                + (1.0 - a) * means[k_a + c]
                + noise_scale * eps[k_a + c];
            beta_new.set(i, j, v);
        }
    }
    Ok((alpha_new, beta_new))
}

/// SMC solve with no frozen coordinates.
pub fn solve_lambda_smc(
    alpha: &DrawSet,
    beta: &DrawSet,
    evaluator: &MomentEvaluator,
    cfg: &TiltConfig,
) -> Result<ParticleSystem> {
    solve_lambda_smc_masked(alpha, beta, evaluator, cfg, &[])
}

/// Dispatches on `cfg.method`.
pub fn solve_lambda(
    alpha: &DrawSet,
    beta: &DrawSet,
    evaluator: &MomentEvaluator,
    cfg: &TiltConfig,
) -> Result<ParticleSystem> {
    match cfg.method {
        TiltMethod::Importance => solve_lambda_is(alpha, beta, evaluator, cfg),
        TiltMethod::Smc => solve_lambda_smc(alpha, beta, evaluator, cfg),
    }
}
