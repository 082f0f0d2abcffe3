//! Reusable check suites behind `check theorems` and the acceptance tests:
//! parallel-form identity, gradient correctness, influence-decay envelope,
//! state-gap contraction sweep, and the low-pass cutoff bound.

use crate::analysis::{
    fit_decay_rate, frequency_response, influence_matrix, oversmoothing_check,
    ChannelAggregation,
};
use crate::coeffs::{DomainMode, SequenceInput, StepCoefficients};
use crate::grad::check::{gradient_check_layer, random_instance, GradCheckRecord};
use crate::params::{AnyParams, PolarizationConfig, S4Params, Variant};
use crate::rng::Rng64;
use crate::scan::{scan_parallel, scan_recurrent};
use crate::Result;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

pub const REAL_SCAN_TOL: f64 = 1e-10;
pub const COMPLEX_SCAN_TOL: f64 = 1e-8;
pub const GRAD_TOL: f64 = 1e-5;
pub const ENVELOPE_SLOPE_SLACK: f64 = 0.05;
pub const FLAT_FIT_TOL: f64 = 0.01;
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl SuiteReport {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        SuiteReport {
            name: name.into(),
            pass,
            detail,
        }
    }
}

// ------------------------------------------------------------ parallel form

fn random_real_coeffs(rng: &mut Rng64) -> StepCoefficients<f64> {
    let t_len = 2 + rng.below(127);
    let n = 1 + rng.below(32);
    let mut steps = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        let a: Vec<f64> = (0..n).map(|_| rng.uniform(1e-3, 0.999)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        steps.push((a, b, c, rng.uniform(0.05, 1.0)));
    }
    StepCoefficients::from_steps(DomainMode::Discrete, &steps).expect("valid by construction")
}

fn random_complex_coeffs(rng: &mut Rng64) -> StepCoefficients<Complex64> {
    let t_len = 2 + rng.below(127);
    let n = 1 + rng.below(32);
    let mut steps = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        let a: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(rng.uniform(0.05, 0.999), rng.uniform(0.0, 6.28318)))
            .collect();
        let b: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
            .collect();
        let c: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
            .collect();
        steps.push((a, b, c, rng.uniform(0.05, 1.0)));
    }
    StepCoefficients::from_steps(DomainMode::Discrete, &steps).expect("valid by construction")
}

fn max_state_diff_real(coeffs: &StepCoefficients<f64>) -> Result<f64> {
    let rec = scan_recurrent(coeffs)?;
    let par = scan_parallel(coeffs)?;
    Ok(rec
        .states()
        .iter()
        .zip(par.states())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max))
}

fn max_state_diff_complex(coeffs: &StepCoefficients<Complex64>) -> Result<f64> {
    let rec = scan_recurrent(coeffs)?;
    let par = scan_parallel(coeffs)?;
    Ok(rec
        .states()
        .iter()
        .zip(par.states())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max))
}

/// Recurrent vs. closed form over random instances: raw real, raw complex,
/// and coefficients built by every variant on random inputs.
pub fn check_parallel_equivalence(instances: usize, seed: u64) -> Result<SuiteReport> {
    let diffs: Result<Vec<(f64, bool)>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng64::new(seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
            match i % 3 {
                0 => Ok((max_state_diff_real(&random_real_coeffs(&mut rng))?, false)),
                1 => Ok((
                    max_state_diff_complex(&random_complex_coeffs(&mut rng))?,
                    true,
                )),
                _ => {
                    let variant = Variant::ALL[rng.below(Variant::ALL.len())];
                    let n = 1 + rng.below(8);
                    let d = 1 + rng.below(3);
                    let t_len = 2 + rng.below(63);
                    let params =
                        AnyParams::init(variant, n, d, PolarizationConfig::none(), rng.next_u64())?;
                    let x = SequenceInput::random(t_len, d, &mut rng);
                    let mut worst = 0.0f64;
                    for ch in params.build(&x)? {
                        worst = worst.max(max_state_diff_real(&ch)?);
                    }
                    Ok((worst, false))
                }
            }
        })
        .collect();
    let mut worst_real = 0.0f64;
    let mut worst_complex = 0.0f64;
    for (d, complex) in diffs? {
        if complex {
            worst_complex = worst_complex.max(d);
        } else {
            worst_real = worst_real.max(d);
        }
    }
    let pass = worst_real < REAL_SCAN_TOL && worst_complex < COMPLEX_SCAN_TOL;
    Ok(SuiteReport::new(
        "parallel-form-identity",
        pass,
        format!(
            "max |recurrent - closed| real {worst_real:.3e} (tol {REAL_SCAN_TOL:.0e}), complex {worst_complex:.3e} (tol {COMPLEX_SCAN_TOL:.0e}) over {instances} instances"
        ),
    ))
}

// ---------------------------------------------------------------- gradients

/// Analytic vs. central-difference gradients over random layer instances.
pub fn check_gradients(instances: usize, seed: u64) -> Result<(Vec<GradCheckRecord>, SuiteReport)> {
    let all: Result<Vec<Vec<GradCheckRecord>>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let inst_seed = seed ^ (0x5eed + i as u64).wrapping_mul(0x9e3779b97f4a7c15);
            let (params, x) = random_instance(inst_seed)?;
            gradient_check_layer(&params, &x, inst_seed, GRAD_TOL)
        })
        .collect();
    let records: Vec<GradCheckRecord> = all?.into_iter().flatten().collect();
    let worst = records
        .iter()
        .map(|r| r.max_rel_err)
        .fold(0.0f64, f64::max);
    let failures = records.iter().filter(|r| !r.pass).count();
    let pass = failures == 0;
    let report = SuiteReport::new(
        "gradient-correctness",
        pass,
        format!(
            "max rel err {worst:.3e} (tol {GRAD_TOL:.0e}), {failures} failing tensors of {} over {instances} instances",
            records.len()
        ),
    );
    Ok((records, report))
}

// ------------------------------------------------------------ decay envelope

/// (a) Time-invariant scalar closed form is exact and fits κ = ln 2 with
/// R² = 1; (b) selective model at init decays at least as fast as its gate
/// ceiling allows; (c) identity gates fit a flat envelope.
pub fn check_recency(seed: u64, selective_t: usize) -> Result<Vec<SuiteReport>> {
    let mut out = Vec::new();

    // (a) exact geometric decay
    let s4 = AnyParams::S4(S4Params::real(
        vec![(0.5f64).ln()],
        vec![1.0],
        vec![1.0],
        1.0,
    )?);
    let t_len = 64;
    let x = SequenceInput::new(vec![1.0; t_len], t_len, 1)?;
    let m = influence_matrix(&s4, &x, 0, ChannelAggregation::MaxAbs)?;
    let mut worst = 0.0f64;
    for t in 0..t_len {
        for s in 0..=t {
            let expect = 0.5f64.powi((t - s) as i32);
            worst = worst.max((m.score(t, s) - expect).abs());
        }
    }
    let fit = fit_decay_rate(&m, 1..t_len / 2)?;
    let kappa_err = (fit.kappa_hat - std::f64::consts::LN_2).abs();
    let pass_a = worst < EXACT_TOL && kappa_err < EXACT_TOL && fit.r_squared > 1.0 - EXACT_TOL;
    out.push(SuiteReport::new(
        "recency-closed-form",
        pass_a,
        format!(
            "max |score - c·a^lag·Δ·b| = {worst:.3e}, |κ̂ - ln 2| = {kappa_err:.3e}, R² = {}",
            fit.r_squared
        ),
    ));

    // (b) selective model at init: fitted slope at least as steep as the
    // gate ceiling rate, within slack.
    let mut rng = Rng64::new(seed);
    let params = AnyParams::init(Variant::Mamba, 8, 2, PolarizationConfig::none(), rng.next_u64())?;
    let x = SequenceInput::random(selective_t, 2, &mut rng);
    let m = influence_matrix(&params, &x, 0, ChannelAggregation::MaxAbs)?;
    let fit = fit_decay_rate(&m, 1..selective_t / 2)?;
    // slope = -κ̂ must be ≤ log(A_max) + slack, i.e. κ̂ ≥ κ_theory - slack.
    let pass_b = fit.kappa_hat >= fit.kappa_theoretical - ENVELOPE_SLOPE_SLACK;
    out.push(SuiteReport::new(
        "recency-envelope-bound",
        pass_b,
        format!(
            "κ̂ = {:.5} vs theoretical κ = {:.5} (slack {ENVELOPE_SLOPE_SLACK})",
            fit.kappa_hat, fit.kappa_theoretical
        ),
    ));

    // (c) identity gates: flat envelope.
    let la = AnyParams::init(Variant::La, 4, 2, PolarizationConfig::none(), rng.next_u64())?;
    let x = SequenceInput::random(128, 2, &mut rng);
    let m = influence_matrix(&la, &x, 0, ChannelAggregation::MaxAbs)?;
    let fit = fit_decay_rate(&m, 1..64)?;
    let pass_c = fit.kappa_hat.abs() < FLAT_FIT_TOL;
    out.push(SuiteReport::new(
        "recency-identity-flat",
        pass_c,
        format!("κ̂ = {:.5} (tol ±{FLAT_FIT_TOL})", fit.kappa_hat),
    ));
    Ok(out)
}

// ------------------------------------------------------- contraction sweep

/// Random instance under the conservative (equality) condition; every state
/// channel's drive range straddles zero, which the contraction argument
/// needs once the zero initial state participates.
fn conservative_instance(rng: &mut Rng64) -> StepCoefficients<f64> {
    let t_len = 2 + rng.below(63);
    let n = 1 + rng.below(8);
    loop {
        let mut steps = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            let dt = rng.uniform(0.02, 0.98);
            let a = vec![1.0 - dt; n];
            let b: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            steps.push((a, b, vec![1.0; n], dt));
        }
        let coeffs =
            StepCoefficients::from_steps(DomainMode::Discrete, &steps).expect("valid");
        if drives_straddle_zero(&coeffs) {
            return coeffs;
        }
    }
}

/// Random instance under the non-expansive (inequality) condition with the
/// sign-straddling drive the theorem demands.
fn nonexpansive_instance(rng: &mut Rng64) -> StepCoefficients<f64> {
    let t_len = 2 + rng.below(63);
    let n = 1 + rng.below(8);
    loop {
        let mut steps = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            let dt = rng.uniform(0.02, 0.9);
            let a: Vec<f64> = (0..n).map(|_| rng.uniform(1e-3, 1.0 - dt)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            steps.push((a, b, vec![1.0; n], dt));
        }
        let coeffs =
            StepCoefficients::from_steps(DomainMode::Discrete, &steps).expect("valid");
        if drives_straddle_zero(&coeffs) {
            return coeffs;
        }
    }
}

fn drives_straddle_zero(coeffs: &StepCoefficients<f64>) -> bool {
    let (t_len, n) = (coeffs.t_len(), coeffs.state_dim());
    (0..n).all(|j| {
        let mut mn = f64::INFINITY;
        let mut mx = f64::NEG_INFINITY;
        for t in 0..t_len {
            let b = coeffs.b_at(t, j);
            mn = mn.min(b);
            mx = mx.max(b);
        }
        mn <= 0.0 && mx >= 0.0
    })
}

/// Sweep both condition families; any unsatisfied report is a failure.
pub fn check_contraction(instances_per_condition: usize, seed: u64) -> Result<SuiteReport> {
    let results: Result<Vec<(bool, f64)>> = (0..2 * instances_per_condition)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng64::new(seed ^ (i as u64).wrapping_mul(0x2545f4914f6cdd1d));
            let coeffs = if i < instances_per_condition {
                conservative_instance(&mut rng)
            } else {
                nonexpansive_instance(&mut rng)
            };
            let rep = oversmoothing_check(&coeffs)?;
            let margin = rep.rhs - rep.lhs;
            Ok((rep.satisfied == Some(true), margin))
        })
        .collect();
    let results = results?;
    let violations = results.iter().filter(|(ok, _)| !ok).count();
    let worst_margin = results
        .iter()
        .map(|(_, m)| *m)
        .fold(f64::INFINITY, f64::min);
    // Pinned hand instance.
    let hand = StepCoefficients::new(
        2,
        1,
        DomainMode::Discrete,
        vec![0.5, 0.5],
        vec![1.0, -1.0],
        vec![1.0, 1.0],
        vec![0.5, 0.5],
    )?;
    let hand_rep = oversmoothing_check(&hand)?;
    let hand_ok = (hand_rep.lhs - 0.75).abs() < EXACT_TOL
        && (hand_rep.rhs - 1.0).abs() < EXACT_TOL
        && hand_rep.satisfied == Some(true);
    let pass = violations == 0 && hand_ok;
    Ok(SuiteReport::new(
        "state-gap-contraction",
        pass,
        format!(
            "{violations} violations over {} instances (worst margin {worst_margin:.3e}); pinned instance lhs {} rhs {}",
            2 * instances_per_condition,
            hand_rep.lhs,
            hand_rep.rhs
        ),
    ))
}

// ------------------------------------------------------------------ low-pass

pub fn check_low_pass(instances: usize, seed: u64) -> Result<SuiteReport> {
    // Exact single-mode magnitude on the default grid.
    let grid = crate::analysis::default_grid();
    let s4 = S4Params::real(vec![-1.0], vec![1.0], vec![1.0], 0.5)?;
    let resp = frequency_response(&s4, &grid, &[0.1, 0.01])?;
    let mut exact_err = 0.0f64;
    for (w, m) in grid.iter().zip(&resp.magnitudes) {
        exact_err = exact_err.max((m - 1.0 / (1.0 + w * w).sqrt()).abs());
    }
    let single_ok = exact_err < EXACT_TOL && resp.cutoffs.iter().all(|c| c.verified);

    // Random complex-mode instances: cutoff bound and the pointwise
    // envelope |Z| ≤ ‖b‖‖c‖/(ω − A_max) beyond A_max.
    let failures: Result<Vec<bool>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng64::new(seed ^ (0xf0 + i as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let n = 1 + rng.below(8);
            let a: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(-rng.uniform(0.05, 3.0), rng.uniform(-3.0, 3.0)))
                .collect();
            let b: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
                .collect();
            let c: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
                .collect();
            let s4 = S4Params::complex(a, b, c, 0.5)?;
            let grid = crate::analysis::default_grid();
            let resp = frequency_response(&s4, &grid, &[0.1, 0.01])?;
            let cutoff_ok = resp.cutoffs.iter().all(|c| c.verified);
            let envelope_ok = grid
                .iter()
                .zip(&resp.magnitudes)
                .filter(|(&w, _)| w > resp.a_max)
                .all(|(&w, &m)| m <= resp.bc_norm / (w - resp.a_max) + 1e-12);
            Ok(!(cutoff_ok && envelope_ok))
        })
        .collect();
    let bad = failures?.into_iter().filter(|&f| f).count();
    let pass = single_ok && bad == 0;
    Ok(SuiteReport::new(
        "low-pass-cutoff",
        pass,
        format!(
            "single-mode max err {exact_err:.3e} (tol {EXACT_TOL:.0e}); {bad} of {instances} random instances violated a bound"
        ),
    ))
}

/// Everything `check theorems` runs, in order.
pub fn run_all(seed: u64) -> Result<(Vec<SuiteReport>, Vec<GradCheckRecord>)> {
    let mut reports = Vec::new();
    reports.push(check_parallel_equivalence(1000, seed)?);
    let (grad_records, grad_report) = check_gradients(200, seed)?;
    reports.push(grad_report);
    reports.extend(check_recency(seed, 256)?);
    reports.push(check_contraction(1000, seed)?);
    reports.push(check_low_pass(100, seed)?);
    Ok((reports, grad_records))
}
