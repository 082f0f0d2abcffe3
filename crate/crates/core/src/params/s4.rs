//! Time-invariant diagonal parameterization: a_t = exp(Δ·A) constant over
//! the sequence, b_t = b·x_t, c_t = c, Δ_t = Δ. Diagonals may be complex but
//! must have strictly negative real part; Δ lives in (0, 1].

use crate::coeffs::{DomainMode, SequenceInput, StepCoefficients};
use crate::error::Error;
use crate::rng::Rng64;
use crate::Result;
use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct S4Params {
    pub a_re: Vec<f64>,
    pub a_im: Vec<f64>,
    pub b: Vec<f64>,
    pub b_im: Vec<f64>,
    pub c: Vec<f64>,
    pub c_im: Vec<f64>,
    pub delta: f64,
}

impl S4Params {
    /// Real parameterization, the default in practice.
    pub fn real(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, delta: f64) -> Result<Self> {
        let n = a.len();
        let p = S4Params {
            a_re: a,
            a_im: vec![0.0; n],
            b,
            b_im: vec![0.0; n],
            c,
            c_im: vec![0.0; n],
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn complex(
        a: Vec<Complex64>,
        b: Vec<Complex64>,
        c: Vec<Complex64>,
        delta: f64,
    ) -> Result<Self> {
        let p = S4Params {
            a_re: a.iter().map(|z| z.re).collect(),
            a_im: a.iter().map(|z| z.im).collect(),
            b: b.iter().map(|z| z.re).collect(),
            b_im: b.iter().map(|z| z.im).collect(),
            c: c.iter().map(|z| z.re).collect(),
            c_im: c.iter().map(|z| z.im).collect(),
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a_re.len();
        for (name, len) in [
            ("a_im", self.a_im.len()),
            ("b", self.b.len()),
            ("b_im", self.b_im.len()),
            ("c", self.c.len()),
            ("c_im", self.c_im.len()),
        ] {
            if len != n {
                return Err(Error::ShapeMismatch(format!(
                    "s4 {name} has length {len}, expected {n}"
                )));
            }
        }
        if let Some(j) = self.a_re.iter().position(|&re| re >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "s4 diagonal entry {j} has non-negative real part {}",
                self.a_re[j]
            )));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "s4 delta must lie in (0, 1], got {}",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.a_re.len()
    }

    pub fn is_real(&self) -> bool {
        self.a_im.iter().all(|&v| v == 0.0)
            && self.b_im.iter().all(|&v| v == 0.0)
            && self.c_im.iter().all(|&v| v == 0.0)
    }

    pub fn a_complex(&self) -> Vec<Complex64> {
        self.a_re
            .iter()
            .zip(&self.a_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }
    pub fn b_complex(&self) -> Vec<Complex64> {
        self.b
            .iter()
            .zip(&self.b_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }
    pub fn c_complex(&self) -> Vec<Complex64> {
        self.c
            .iter()
            .zip(&self.c_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }

    pub fn init(state_dim: usize, rng: &mut Rng64) -> Result<Self> {
        let a: Vec<f64> = (0..state_dim).map(|n| -((n + 1) as f64)).collect();
        let mut b = vec![0.0; state_dim];
        let mut c = vec![0.0; state_dim];
        let scale = 1.0 / (state_dim as f64).sqrt();
        rng.fill_uniform(&mut b, scale);
        rng.fill_uniform(&mut c, scale);
        // Log-uniform step size in [1e-3, 1e-1].
        let delta = (rng.uniform((1e-3f64).ln(), (1e-1f64).ln())).exp();
        S4Params::real(a, b, c, delta)
    }

    /// Real-path coefficient streams, one per input channel (the same
    /// parameter set drives every channel; only b_t = b·x_t[d] differs).
    pub fn build(&self, x: &SequenceInput) -> Result<Vec<StepCoefficients<f64>>> {
        self.validate()?;
        if !self.is_real() {
            return Err(Error::InvalidParameter(
                "complex s4 parameters have no real coefficient stream; use build_complex".into(),
            ));
        }
        let n = self.state_dim();
        let t_len = x.t_len();
        let gates: Vec<f64> = self.a_re.iter().map(|a| (self.delta * a).exp()).collect();
        let mut out = Vec::with_capacity(x.channels());
        for d in 0..x.channels() {
            let mut a = Vec::with_capacity(t_len * n);
            let mut b = Vec::with_capacity(t_len * n);
            let mut c = Vec::with_capacity(t_len * n);
            for t in 0..t_len {
                let xt = x.at(t, d);
                a.extend_from_slice(&gates);
                b.extend(self.b.iter().map(|bn| bn * xt));
                c.extend_from_slice(&self.c);
            }
            out.push(StepCoefficients::new(
                t_len,
                n,
                DomainMode::Discrete,
                a,
                b,
                c,
                vec![self.delta; t_len],
            )?);
        }
        Ok(out)
    }

    /// Complex coefficient stream for a single-channel input.
    pub fn build_complex(&self, x: &[f64]) -> Result<StepCoefficients<Complex64>> {
        self.validate()?;
        let n = self.state_dim();
        let t_len = x.len();
        let gates: Vec<Complex64> = self
            .a_complex()
            .iter()
            .map(|a| (a * self.delta).exp())
            .collect();
        let bs = self.b_complex();
        let cs = self.c_complex();
        let mut a = Vec::with_capacity(t_len * n);
        let mut b = Vec::with_capacity(t_len * n);
        let mut c = Vec::with_capacity(t_len * n);
        for &xt in x {
            a.extend_from_slice(&gates);
            b.extend(bs.iter().map(|bn| bn * xt));
            c.extend_from_slice(&cs);
        }
        StepCoefficients::new(
            t_len,
            n,
            DomainMode::Discrete,
            a,
            b,
            c,
            vec![self.delta; t_len],
        )
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("a_diag", self.a_re.as_slice()),
            ("b", self.b.as_slice()),
            ("c", self.c.as_slice()),
            ("delta", std::slice::from_ref(&self.delta)),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("a_diag", self.a_re.as_mut_slice()),
            ("b", self.b.as_mut_slice()),
            ("c", self.c.as_mut_slice()),
            ("delta", std::slice::from_mut(&mut self.delta)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_is_exp_of_delta_a() {
        // A = -1, Δ = ln 2 → gate 0.5.
        let p = S4Params::real(vec![-1.0], vec![1.0], vec![1.0], std::f64::consts::LN_2).unwrap();
        let x = SequenceInput::new(vec![1.0, 1.0], 2, 1).unwrap();
        let coeffs = p.build(&x).unwrap();
        for t in 0..2 {
            assert!((coeffs[0].a_at(t, 0) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_gives_zero_drive() {
        let p = S4Params::real(vec![-1.0, -2.0], vec![0.3, -0.4], vec![1.0, 1.0], 0.5).unwrap();
        let x = SequenceInput::new(vec![0.0; 6], 3, 2).unwrap();
        for ch in p.build(&x).unwrap() {
            assert!(ch.b().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn two_mode_gates_match_scalar_exponential() {
        // A = (-1, -2), Δ = 0.1 → gates (e^-0.1, e^-0.2).
        let p = S4Params::real(vec![-1.0, -2.0], vec![1.0, 1.0], vec![1.0, 1.0], 0.1).unwrap();
        let x = SequenceInput::new(vec![1.0], 1, 1).unwrap();
        let coeffs = p.build(&x).unwrap();
        assert!((coeffs[0].a_at(0, 0) - (-0.1f64).exp()).abs() < 1e-15);
        assert!((coeffs[0].a_at(0, 1) - (-0.2f64).exp()).abs() < 1e-15);
        assert!((coeffs[0].a_at(0, 0) - 0.9048).abs() < 1e-4);
        assert!((coeffs[0].a_at(0, 1) - 0.8187).abs() < 1e-4);
    }

    #[test]
    fn complex_build_agrees_across_scan_forms() {
        use num_complex::Complex64;
        let a = vec![
            Complex64::new(-0.5, 2.0),
            Complex64::new(-1.5, -0.7),
        ];
        let b = vec![Complex64::new(0.8, 0.1), Complex64::new(-0.3, 0.4)];
        let c = vec![Complex64::new(1.0, 0.0), Complex64::new(0.2, -0.9)];
        let p = S4Params::complex(a, b, c, 0.7).unwrap();
        let x: Vec<f64> = (0..24).map(|t| ((t * 7 + 3) % 11) as f64 / 11.0 - 0.5).collect();
        let coeffs = p.build_complex(&x).unwrap();
        // Gate moduli respect the discrete-mode constraint: |exp(ΔA)| =
        // exp(Δ·Re A) < 1 for negative real parts.
        for t in 0..coeffs.t_len() {
            for j in 0..coeffs.state_dim() {
                let m = num_complex::Complex64::norm(coeffs.a_at(t, j));
                assert!(m > 0.0 && m < 1.0);
            }
        }
        let rec = crate::scan::scan_recurrent(&coeffs).unwrap();
        let par = crate::scan::scan_parallel(&coeffs).unwrap();
        for (u, v) in rec.states().iter().zip(par.states()) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonnegative_real_part() {
        assert!(S4Params::real(vec![0.5], vec![1.0], vec![1.0], 0.5).is_err());
        assert!(S4Params::real(vec![0.0], vec![1.0], vec![1.0], 0.5).is_err());
    }

    #[test]
    fn rejects_delta_outside_unit_interval() {
        assert!(S4Params::real(vec![-1.0], vec![1.0], vec![1.0], 0.0).is_err());
        assert!(S4Params::real(vec![-1.0], vec![1.0], vec![1.0], 1.5).is_err());
    }
}
