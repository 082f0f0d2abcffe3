//! Per-timestep coefficient tuples (a_t, b_t, c_t, Δ_t) driving the diagonal
//! recurrence, plus validation diagnostics.

use crate::error::Error;
use crate::scalar::ScanScalar;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Which constraint regime the diagonal entries live in.
///
/// Discrete gates have modulus in [0, 1] (strict interior except for
/// polarized channels pinned to the endpoints). Continuous-domain entries
/// are pre-discretization and must have strictly negative real part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainMode {
    Discrete,
    Continuous,
}

/// A T×D input sequence, channels independent.
#[derive(Clone, Debug)]
pub struct SequenceInput {
    values: Vec<f64>,
    t_len: usize,
    channels: usize,
}

impl SequenceInput {
    pub fn new(values: Vec<f64>, t_len: usize, channels: usize) -> Result<Self> {
        if t_len == 0 || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "sequence input requires T >= 1 and D >= 1, got T={t_len}, D={channels}"
            )));
        }
        if values.len() != t_len * channels {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for T={} x D={}, got {}",
                t_len * channels,
                t_len,
                channels,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!(
                "non-finite input value at flat index {bad}"
            )));
        }
        Ok(SequenceInput {
            values,
            t_len,
            channels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t_len = rows.len();
        let channels = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut values = Vec::with_capacity(t_len * channels);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != channels {
                return Err(Error::DimensionMismatch {
                    step: t,
                    detail: format!("row has {} channels, expected {}", row.len(), channels),
                });
            }
            values.extend_from_slice(row);
        }
        SequenceInput::new(values, t_len, channels)
    }

    /// Random input with entries uniform in [-1, 1].
    pub fn random(t_len: usize, channels: usize, rng: &mut crate::rng::Rng64) -> Self {
        let mut values = vec![0.0; t_len * channels];
        rng.fill_uniform(&mut values, 1.0);
        SequenceInput {
            values,
            t_len,
            channels,
        }
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn at(&self, t: usize, d: usize) -> f64 {
        self.values[t * self.channels + d]
    }
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }
}

/// Coefficients for one scalar channel over T steps: diagonals a (T×N),
/// encoded tokens b (T×N), decoder weights c (T×N), and step sizes Δ (T).
/// Δ is always real.
#[derive(Clone, Debug)]
pub struct StepCoefficients<S: ScanScalar> {
    t_len: usize,
    state_dim: usize,
    mode: DomainMode,
    a: Vec<S>,
    b: Vec<S>,
    c: Vec<S>,
    delta: Vec<f64>,
}

impl<S: ScanScalar> StepCoefficients<S> {
    pub fn new(
        t_len: usize,
        state_dim: usize,
        mode: DomainMode,
        a: Vec<S>,
        b: Vec<S>,
        c: Vec<S>,
        delta: Vec<f64>,
    ) -> Result<Self> {
        if t_len == 0 || state_dim == 0 {
            return Err(Error::ShapeMismatch(format!(
                "coefficients require T >= 1 and N >= 1, got T={t_len}, N={state_dim}"
            )));
        }
        let tn = t_len * state_dim;
        for (name, len) in [("a", a.len()), ("b", b.len()), ("c", c.len())] {
            if len != tn {
                // Report the first step whose block is incomplete.
                let step = len / state_dim;
                return Err(Error::DimensionMismatch {
                    step,
                    detail: format!("{name} has {len} entries, expected T*N = {tn}"),
                });
            }
        }
        if delta.len() != t_len {
            return Err(Error::DimensionMismatch {
                step: delta.len(),
                detail: format!("delta has {} entries, expected T = {}", delta.len(), t_len),
            });
        }
        // Positivity of Δ is guaranteed by the discretization-based
        // parameterizations and reported by diagnostics(); the
        // linear-attention reformulations emit sign-free Δ_t = v(x_t), so it
        // is not a structural requirement here. Non-finite Δ is.
        if let Some(t) = delta.iter().position(|d| !d.is_finite()) {
            return Err(Error::InvalidCoefficient {
                t,
                n: 0,
                reason: format!("delta must be finite, got {}", delta[t]),
            });
        }
        Ok(StepCoefficients {
            t_len,
            state_dim,
            mode,
            a,
            b,
            c,
            delta,
        })
    }

    /// Build from per-step (a_t, b_t, c_t, Δ_t) tuples; rejects the first
    /// step whose vectors disagree on N.
    #[allow(clippy::type_complexity)]
    pub fn from_steps(
        mode: DomainMode,
        steps: &[(Vec<S>, Vec<S>, Vec<S>, f64)],
    ) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::ShapeMismatch("no steps provided".into()));
        }
        let n = steps[0].0.len();
        let mut a = Vec::with_capacity(steps.len() * n);
        let mut b = Vec::with_capacity(steps.len() * n);
        let mut c = Vec::with_capacity(steps.len() * n);
        let mut delta = Vec::with_capacity(steps.len());
        for (t, (at, bt, ct, dt)) in steps.iter().enumerate() {
            if at.len() != n || bt.len() != n || ct.len() != n {
                return Err(Error::DimensionMismatch {
                    step: t,
                    detail: format!(
                        "step vectors have lengths a={}, b={}, c={}, expected N={}",
                        at.len(),
                        bt.len(),
                        ct.len(),
                        n
                    ),
                });
            }
            a.extend_from_slice(at);
            b.extend_from_slice(bt);
            c.extend_from_slice(ct);
            delta.push(*dt);
        }
        StepCoefficients::new(steps.len(), n, mode, a, b, c, delta)
    }

    /// Constant coefficients repeated over T steps (single channel helpers
    /// for tests and closed-form probes).
    pub fn constant(
        t_len: usize,
        mode: DomainMode,
        a: &[S],
        b: &[S],
        c: &[S],
        delta: f64,
    ) -> Result<Self> {
        let n = a.len();
        let rep = |v: &[S]| {
            let mut out = Vec::with_capacity(t_len * n);
            for _ in 0..t_len {
                out.extend_from_slice(v);
            }
            out
        };
        StepCoefficients::new(t_len, n, mode, rep(a), rep(b), rep(c), vec![delta; t_len])
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    pub fn mode(&self) -> DomainMode {
        self.mode
    }
    pub fn a(&self) -> &[S] {
        &self.a
    }
    pub fn b(&self) -> &[S] {
        &self.b
    }
    pub fn c(&self) -> &[S] {
        &self.c
    }
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }
    pub fn b_mut(&mut self) -> &mut [S] {
        &mut self.b
    }

    /// a_t[n] with t zero-based.
    pub fn a_at(&self, t: usize, n: usize) -> S {
        self.a[t * self.state_dim + n]
    }
    pub fn b_at(&self, t: usize, n: usize) -> S {
        self.b[t * self.state_dim + n]
    }
    pub fn c_at(&self, t: usize, n: usize) -> S {
        self.c[t * self.state_dim + n]
    }

    /// Validation and range diagnostics. Never fails: violations are
    /// reported, not thrown.
    pub fn diagnostics(&self) -> CoefficientDiagnostics {
        let n = self.state_dim;
        let mut per_channel_max = vec![f64::NEG_INFINITY; n];
        let mut per_channel_min = vec![f64::INFINITY; n];
        let mut mode_violations = Vec::new();
        let mut cond_eq = true; // a_t[n] + Δ_t = 1 for every (t, n)
        let mut cond_le = true; // a_t[n] + Δ_t <= 1 for every (t, n)
        let delta_all_positive = self.delta.iter().all(|&d| d > 0.0);
        const EQ_TOL: f64 = 1e-12;

        for t in 0..self.t_len {
            let dt = self.delta[t];
            for j in 0..n {
                let v = self.a[t * n + j];
                let m = v.abs();
                if m > per_channel_max[j] {
                    per_channel_max[j] = m;
                }
                if m < per_channel_min[j] {
                    per_channel_min[j] = m;
                }
                let violation = match self.mode {
                    DomainMode::Discrete => m > 1.0 + EQ_TOL,
                    DomainMode::Continuous => v.re() >= 0.0,
                };
                if violation {
                    mode_violations.push((t, j));
                }
                if self.mode == DomainMode::Discrete {
                    let s = v.re() + dt;
                    if (s - 1.0).abs() > EQ_TOL || v.im() != 0.0 {
                        cond_eq = false;
                    }
                    if s > 1.0 + EQ_TOL || v.im() != 0.0 {
                        cond_le = false;
                    }
                }
            }
        }
        if self.mode == DomainMode::Continuous {
            cond_eq = false;
            cond_le = false;
        }

        let a_max = per_channel_max.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let a_min = per_channel_min.iter().cloned().fold(f64::INFINITY, f64::min);
        CoefficientDiagnostics {
            a_max,
            a_min,
            per_channel_max,
            per_channel_min,
            mode_violations,
            condition_sum_equals_one: cond_eq,
            condition_sum_at_most_one: cond_le,
            delta_all_positive,
        }
    }
}

/// Range report for a coefficient sequence: the A_max / A_min extrema of the
/// diagonal moduli (global and per state channel), mode violations, and
/// whether the non-expansive update conditions hold.
#[derive(Clone, Debug, Serialize)]
pub struct CoefficientDiagnostics {
    pub a_max: f64,
    pub a_min: f64,
    pub per_channel_max: Vec<f64>,
    pub per_channel_min: Vec<f64>,
    /// (t, n) pairs violating the domain-mode constraint.
    pub mode_violations: Vec<(usize, usize)>,
    /// a_t[n] + Δ_t = 1 everywhere (conservative update).
    pub condition_sum_equals_one: bool,
    /// a_t[n] + Δ_t <= 1 everywhere (non-expansive update).
    pub condition_sum_at_most_one: bool,
    /// Δ_t > 0 everywhere, as the discretization-based variants guarantee.
    pub delta_all_positive: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagnostics_constant_half() {
        // a = 0.5, Δ = 0.5: conservative condition holds, extrema collapse.
        let coeffs = StepCoefficients::constant(
            4,
            DomainMode::Discrete,
            &[0.5f64],
            &[1.0],
            &[1.0],
            0.5,
        )
        .unwrap();
        let d = coeffs.diagnostics();
        assert!(d.condition_sum_equals_one);
        assert!(d.condition_sum_at_most_one);
        assert_eq!(d.a_max, 0.5);
        assert_eq!(d.a_min, 0.5);
        assert!(d.mode_violations.is_empty());
    }

    #[test]
    fn diagnostics_flags_expansive_updates() {
        // a = 0.9, Δ = 0.5: 1.4 > 1, neither condition.
        let coeffs = StepCoefficients::constant(
            4,
            DomainMode::Discrete,
            &[0.9f64],
            &[1.0],
            &[1.0],
            0.5,
        )
        .unwrap();
        let d = coeffs.diagnostics();
        assert!(!d.condition_sum_equals_one);
        assert!(!d.condition_sum_at_most_one);
    }

    #[test]
    fn from_steps_rejects_mismatched_step() {
        let steps = vec![
            (vec![0.5f64, 0.5], vec![1.0, 1.0], vec![1.0, 1.0], 1.0),
            (vec![0.5, 0.5], vec![1.0], vec![1.0, 1.0], 1.0),
        ];
        let err = StepCoefficients::from_steps(DomainMode::Discrete, &steps).unwrap_err();
        match err {
            Error::DimensionMismatch { step, .. } => assert_eq!(step, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_nonfinite_delta_and_flags_sign() {
        let err = StepCoefficients::new(
            2,
            1,
            DomainMode::Discrete,
            vec![0.5f64, 0.5],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, f64::NAN],
        )
        .unwrap_err();
        match err {
            Error::InvalidCoefficient { t, .. } => assert_eq!(t, 1),
            other => panic!("unexpected error {other:?}"),
        }
        let coeffs = StepCoefficients::new(
            2,
            1,
            DomainMode::Discrete,
            vec![0.5f64, 0.5],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, -0.25],
        )
        .unwrap();
        assert!(!coeffs.diagnostics().delta_all_positive);
    }
}
