//! The diagonal recurrence in its two algebraically equivalent forms.
//!
//! Recurrent: h_t = a_t ⊙ h_{t-1} + Δ_t b_t, y_t = c_t · h_t, h_0 = 0.
//!
//! Parallel (closed) form:
//!   h_t = Σ_{s=1}^{t-1} (∏_{r=s+1}^{t} a_r) ⊙ Δ_s b_s + Δ_t b_t.
//!
//! For channels whose diagonal entries are all strictly positive reals, the
//! cumulative products are evaluated as exp of differences of prefix sums of
//! logarithms, which is stable down to products that would underflow a naive
//! running product at T in the thousands. Channels containing a zero,
//! negative, or complex entry fall back to direct products.

use crate::coeffs::StepCoefficients;
use crate::error::Error;
use crate::scalar::ScanScalar;
use crate::Result;

/// Memory states h_0..h_T ((T+1)×N, row 0 pinned to zero) and decoded
/// outputs y_1..y_T.
#[derive(Clone, Debug)]
pub struct StateTrajectory<S: ScanScalar> {
    t_len: usize,
    state_dim: usize,
    states: Vec<S>,
    outputs: Vec<S>,
}

impl<S: ScanScalar> StateTrajectory<S> {
    pub fn t_len(&self) -> usize {
        self.t_len
    }
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    /// Flat (T+1)×N states, h_0 first.
    pub fn states(&self) -> &[S] {
        &self.states
    }
    pub fn outputs(&self) -> &[S] {
        &self.outputs
    }
    /// h_t (t in 0..=T).
    pub fn state(&self, t: usize) -> &[S] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }
    /// y_t with t in 1..=T.
    pub fn output(&self, t: usize) -> S {
        self.outputs[t - 1]
    }
}

/// Step-by-step evaluation of the recurrence. Deterministic: a single
/// sequential loop with fixed accumulation order.
pub fn scan_recurrent<S: ScanScalar>(coeffs: &StepCoefficients<S>) -> Result<StateTrajectory<S>> {
    let t_len = coeffs.t_len();
    let n = coeffs.state_dim();
    let mut states = vec![S::ZERO; (t_len + 1) * n];
    let mut outputs = Vec::with_capacity(t_len);

    for t in 0..t_len {
        let dt = coeffs.delta()[t];
        let (prev, cur) = states.split_at_mut((t + 1) * n);
        let prev = &prev[t * n..];
        let cur = &mut cur[..n];
        let a_row = &coeffs.a()[t * n..(t + 1) * n];
        let b_row = &coeffs.b()[t * n..(t + 1) * n];
        let c_row = &coeffs.c()[t * n..(t + 1) * n];
        let mut y = S::ZERO;
        for j in 0..n {
            let h = a_row[j] * prev[j] + b_row[j].scale(dt);
            cur[j] = h;
            y = y + c_row[j] * h;
        }
        if !y.is_finite_val() {
            return Err(Error::NonFinite { op_index: t });
        }
        outputs.push(y);
    }

    Ok(StateTrajectory {
        t_len,
        state_dim: n,
        states,
        outputs,
    })
}

/// Closed-form evaluation. Independent of `scan_recurrent` in both algebra
/// and accumulation order, which is what makes their agreement a meaningful
/// check.
pub fn scan_parallel<S: ScanScalar>(coeffs: &StepCoefficients<S>) -> Result<StateTrajectory<S>> {
    let t_len = coeffs.t_len();
    let n = coeffs.state_dim();
    let mut states = vec![S::ZERO; (t_len + 1) * n];
    let mut outputs = vec![S::ZERO; t_len];

    for j in 0..n {
        // Log-space path requires every a_t[j] to be a strictly positive
        // real; a single zero (e.g. a polarized gate) drops the channel to
        // direct products.
        let logs: Option<Vec<f64>> = (0..t_len)
            .map(|t| coeffs.a_at(t, j).positive_real().map(f64::ln))
            .collect();

        match logs {
            Some(logs) => {
                // Prefix sums L_t = Σ_{r<=t} ln a_r (L_0 = 0), so
                // ∏_{r=s+1}^{t} a_r = exp(L_t - L_s).
                let mut prefix = vec![0.0; t_len + 1];
                for t in 0..t_len {
                    prefix[t + 1] = prefix[t] + logs[t];
                }
                for t in 1..=t_len {
                    let mut h = S::ZERO;
                    for s in 1..t {
                        let w = (prefix[t] - prefix[s]).exp();
                        h = h + coeffs.b_at(s - 1, j).scale(coeffs.delta()[s - 1] * w);
                    }
                    h = h + coeffs.b_at(t - 1, j).scale(coeffs.delta()[t - 1]);
                    states[t * n + j] = h;
                }
            }
            None => {
                for t in 1..=t_len {
                    let mut h = coeffs.b_at(t - 1, j).scale(coeffs.delta()[t - 1]);
                    let mut prod = S::ONE;
                    for s in (1..t).rev() {
                        prod = prod * coeffs.a_at(s, j); // a_{s+1}, zero-based index s
                        h = h + (prod * coeffs.b_at(s - 1, j)).scale(coeffs.delta()[s - 1]);
                    }
                    states[t * n + j] = h;
                }
            }
        }
    }

    for t in 1..=t_len {
        let mut y = S::ZERO;
        for j in 0..n {
            y = y + coeffs.c_at(t - 1, j) * states[t * n + j];
        }
        outputs[t - 1] = y;
    }

    Ok(StateTrajectory {
        t_len,
        state_dim: n,
        states,
        outputs,
    })
}

/// Cumulative-product weights ∏_{r=s+1}^{t} a_r for s = 1..=t on one state
/// channel, the "attention" assigned to each past token when decoding at t.
pub fn cumulative_weights<S: ScanScalar>(
    coeffs: &StepCoefficients<S>,
    t: usize,
    channel: usize,
) -> Vec<S> {
    let mut out = vec![S::ONE; t];
    let mut prod = S::ONE;
    for s in (1..t).rev() {
        prod = prod * coeffs.a_at(s, channel);
        out[s - 1] = prod;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::DomainMode;
    use num_complex::Complex64;

    fn simple_coeffs() -> StepCoefficients<f64> {
        // N=1, T=2, a=(0.5,0.5), Δ=(1,1), b=(1,2), c=(1,1)
        StepCoefficients::new(
            2,
            1,
            DomainMode::Discrete,
            vec![0.5, 0.5],
            vec![1.0, 2.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn recurrent_direct_substitution() {
        let traj = scan_recurrent(&simple_coeffs()).unwrap();
        assert_eq!(traj.state(1), &[1.0]);
        assert_eq!(traj.state(2), &[2.5]);
        assert_eq!(traj.outputs(), &[1.0, 2.5]);
    }

    #[test]
    fn zero_drive_gives_zero_trajectory() {
        let coeffs = StepCoefficients::constant(
            8,
            DomainMode::Discrete,
            &[0.7f64, 0.2],
            &[0.0, 0.0],
            &[1.0, -1.0],
            0.5,
        )
        .unwrap();
        let traj = scan_recurrent(&coeffs).unwrap();
        assert!(traj.states().iter().all(|&h| h == 0.0));
        assert!(traj.outputs().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn parallel_matches_simple_instance() {
        let traj = scan_parallel(&simple_coeffs()).unwrap();
        assert_eq!(traj.state(1), &[1.0]);
        assert_eq!(traj.state(2), &[2.5]);
        assert_eq!(traj.outputs(), &[1.0, 2.5]);
    }

    #[test]
    fn parallel_hand_unrolled_t3() {
        // a=0.5, Δ=1, b=1: h_3 = 0.25 + 0.5 + 1 = 1.75
        let coeffs =
            StepCoefficients::constant(3, DomainMode::Discrete, &[0.5f64], &[1.0], &[1.0], 1.0)
                .unwrap();
        let traj = scan_parallel(&coeffs).unwrap();
        assert!((traj.state(3)[0] - 1.75).abs() < 1e-15);
    }

    #[test]
    fn parallel_complex_single_product() {
        // a = 0.5 e^{iπ/4}, b = c = 1, Δ = 1, T = 2: h_2 = a + 1.
        let a = Complex64::from_polar(0.5, std::f64::consts::FRAC_PI_4);
        let one = Complex64::new(1.0, 0.0);
        let coeffs =
            StepCoefficients::constant(2, DomainMode::Discrete, &[a], &[one], &[one], 1.0).unwrap();
        let traj = scan_parallel(&coeffs).unwrap();
        let expect = a + one;
        assert!((traj.state(2)[0] - expect).norm() < 1e-15);
        let rec = scan_recurrent(&coeffs).unwrap();
        assert!((rec.state(2)[0] - expect).norm() < 1e-15);
    }

    #[test]
    fn zero_gate_falls_back_to_direct_products() {
        // One exact zero in a: log path impossible, results must still agree.
        let coeffs = StepCoefficients::new(
            3,
            1,
            DomainMode::Discrete,
            vec![0.5, 0.0, 0.5],
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
        )
        .unwrap();
        let par = scan_parallel(&coeffs).unwrap();
        let rec = scan_recurrent(&coeffs).unwrap();
        for t in 0..=3 {
            assert!((par.state(t)[0] - rec.state(t)[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn causality_future_steps_do_not_affect_past_outputs() {
        let mut steps = Vec::new();
        for t in 0..6 {
            steps.push((vec![0.6 + 0.01 * t as f64], vec![1.0 - 0.1 * t as f64], vec![1.0], 0.5));
        }
        let base = StepCoefficients::from_steps(DomainMode::Discrete, &steps).unwrap();
        let y_base = scan_recurrent(&base).unwrap().outputs().to_vec();
        // Perturb everything after step 3.
        let mut steps2 = steps.clone();
        for s in steps2.iter_mut().skip(4) {
            s.0[0] = 0.123;
            s.1[0] = 9.0;
            s.3 = 0.9;
        }
        let pert = StepCoefficients::from_steps(DomainMode::Discrete, &steps2).unwrap();
        let y_pert = scan_recurrent(&pert).unwrap().outputs().to_vec();
        for t in 0..4 {
            assert_eq!(y_base[t], y_pert[t]);
        }
    }

    #[test]
    fn linearity_in_drive_is_exact_for_power_of_two_scale() {
        let coeffs = StepCoefficients::new(
            4,
            2,
            DomainMode::Discrete,
            vec![0.9, 0.3, 0.8, 0.2, 0.7, 0.4, 0.6, 0.5],
            vec![1.0, -0.5, 0.25, 2.0, -1.5, 0.75, 3.0, -0.125],
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            vec![0.5, 0.25, 0.75, 1.0],
        )
        .unwrap();
        let base = scan_recurrent(&coeffs).unwrap();
        let mut scaled = coeffs.clone();
        for v in scaled.b_mut() {
            *v *= 2.0;
        }
        let twice = scan_recurrent(&scaled).unwrap();
        for (h, h2) in base.states().iter().zip(twice.states()) {
            assert_eq!(h * 2.0, *h2);
        }
        for (y, y2) in base.outputs().iter().zip(twice.outputs()) {
            assert_eq!(y * 2.0, *y2);
        }
    }

    #[test]
    fn cumulative_weights_monotone_in_gap() {
        // All gates in (0,1): nearer tokens get strictly larger weights.
        let mut rng = crate::rng::Rng64::new(11);
        let t_len = 20;
        let mut steps = Vec::new();
        for _ in 0..t_len {
            steps.push((
                vec![rng.uniform(0.05, 0.95)],
                vec![rng.uniform(-1.0, 1.0)],
                vec![1.0],
                0.5,
            ));
        }
        let coeffs = StepCoefficients::from_steps(DomainMode::Discrete, &steps).unwrap();
        let w = cumulative_weights(&coeffs, t_len, 0);
        for s in 1..w.len() {
            assert!(w[s - 1] < w[s], "weights must increase toward the present");
        }
    }
}
