//! Continuous-time frequency response of the time-invariant kernel
//! z(t) = Σ_n c_n b_n exp(A_n t): Z(ω) = Σ_n c_n b_n / (iω − A_n), with the
//! analytic cutoff Ω(ε) = ‖b‖₂‖c‖₂/ε + A_max beyond which |Z| ≤ ε.

use crate::error::Error;
use crate::params::S4Params;
use crate::Result;
use num_complex::Complex64;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct FrequencyResponse {
    pub omegas: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// (ε, Ω(ε), |Z(Ω)|, verified) per requested ε: verified means |Z| ≤ ε
    /// both at Ω and at every grid point beyond it.
    pub cutoffs: Vec<CutoffCheck>,
    /// max_n |A_n| (modulus).
    pub a_max: f64,
    /// ‖b‖₂‖c‖₂.
    pub bc_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CutoffCheck {
    pub epsilon: f64,
    pub omega_cutoff: f64,
    pub magnitude_at_cutoff: f64,
    pub verified: bool,
}

/// Logarithmic grid of `n` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Default grid: 256 log-spaced points covering 1e-2 to 1e4.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-2, 1e4, 256)
}

/// Exact |Z(ω)| at one frequency.
pub fn magnitude_at(a: &[Complex64], b: &[Complex64], c: &[Complex64], omega: f64) -> f64 {
    let mut z = Complex64::new(0.0, 0.0);
    for ((an, bn), cn) in a.iter().zip(b).zip(c) {
        z += cn * bn / (Complex64::new(0.0, omega) - an);
    }
    z.norm()
}

/// Evaluate the analytic response on a grid and verify the cutoff bound for
/// each requested ε. Rejects diagonals with non-negative real part (the
/// defining integral diverges there).
pub fn frequency_response(
    s4: &S4Params,
    omegas: &[f64],
    epsilons: &[f64],
) -> Result<FrequencyResponse> {
    s4.validate()?;
    if let Some(j) = s4.a_re.iter().position(|&re| re >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frequency response undefined: diagonal entry {j} has non-negative real part"
        )));
    }
    let a = s4.a_complex();
    let b = s4.b_complex();
    let c = s4.c_complex();
    let a_max = a.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let bnorm = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let cnorm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let bc_norm = bnorm * cnorm;

    let magnitudes: Vec<f64> = omegas
        .iter()
        .map(|&w| magnitude_at(&a, &b, &c, w))
        .collect();

    let mut cutoffs = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let omega_cutoff = bc_norm / eps + a_max;
        let mag_at = magnitude_at(&a, &b, &c, omega_cutoff);
        let beyond_ok = omegas
            .iter()
            .zip(&magnitudes)
            .filter(|(&w, _)| w >= omega_cutoff)
            .all(|(_, &m)| m <= eps);
        cutoffs.push(CutoffCheck {
            epsilon: eps,
            omega_cutoff,
            magnitude_at_cutoff: mag_at,
            verified: mag_at <= eps && beyond_ok,
        });
    }
    Ok(FrequencyResponse {
        omegas: omegas.to_vec(),
        magnitudes,
        cutoffs,
        a_max,
        bc_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_pole() -> S4Params {
        S4Params::real(vec![-1.0], vec![1.0], vec![1.0], 0.5).unwrap()
    }

    #[test]
    fn single_pole_magnitude() {
        // A=−1, b=c=1: |Z(ω)| = 1/√(1+ω²); ω=0 → 1, ω=√3 → 0.5.
        let s4 = single_pole();
        let grid = vec![0.0, 3.0f64.sqrt(), 1.0];
        let resp = frequency_response(&s4, &grid, &[]).unwrap();
        assert!((resp.magnitudes[0] - 1.0).abs() < 1e-15);
        assert!((resp.magnitudes[1] - 0.5).abs() < 1e-15);
        assert!((resp.magnitudes[2] - 1.0 / 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cutoff_formula_unit_norms() {
        // ε = 0.01, ‖b‖ = ‖c‖ = 1, A_max = 1 → Ω = 101.
        let s4 = single_pole();
        let resp = frequency_response(&s4, &default_grid(), &[0.01]).unwrap();
        assert!((resp.cutoffs[0].omega_cutoff - 101.0).abs() < 1e-12);
        assert!(resp.cutoffs[0].verified);
    }

    #[test]
    fn monotone_beyond_a_max_single_mode() {
        let s4 = single_pole();
        let grid = default_grid();
        let resp = frequency_response(&s4, &grid, &[]).unwrap();
        for i in 1..grid.len() {
            if grid[i - 1] >= resp.a_max {
                assert!(resp.magnitudes[i] <= resp.magnitudes[i - 1] + 1e-15);
            }
        }
    }

    #[test]
    fn rejects_nonnegative_real_part() {
        let bad = S4Params {
            a_re: vec![0.5],
            a_im: vec![0.0],
            b: vec![1.0],
            b_im: vec![0.0],
            c: vec![1.0],
            c_im: vec![0.0],
            delta: 0.5,
        };
        assert!(frequency_response(&bad, &[1.0], &[]).is_err());
    }
}
