//! Input-selective parameterization: Δ_t = softplus(W_Δ x_t + bias) per
//! channel, a_t = exp(Δ_t A), b_t = (W_B x_t)·x_t[d], c_t = W_C x_t. The
//! encode/decode projections are shared across channels; Δ and the gates are
//! per channel. Optionally carries polarized (pinned) state channels.

use super::{apply_polarization, softplus, softplus_inv, PolarizationConfig};
use crate::coeffs::{DomainMode, SequenceInput, StepCoefficients};
use crate::error::Error;
use crate::rng::Rng64;
use crate::Result;

#[derive(Clone, Debug)]
pub struct MambaParams {
    pub state_dim: usize,
    pub channels: usize,
    /// D×N pre-exponential diagonals, strictly negative on free channels;
    /// polarized columns pinned to 0 / -1000.
    pub a_diag: Vec<f64>,
    /// D×D in input-major layout: column d holds the length-D step-size
    /// weight vector of channel d.
    pub w_delta: Vec<f64>,
    /// D step-size biases.
    pub delta_bias: Vec<f64>,
    /// D×N encode projection (input-dim × state-dim layout).
    pub w_b: Vec<f64>,
    /// D×N decode projection.
    pub w_c: Vec<f64>,
    pub polarization: PolarizationConfig,
}

impl MambaParams {
    pub fn init(
        state_dim: usize,
        channels: usize,
        polarization: PolarizationConfig,
        rng: &mut Rng64,
    ) -> Result<Self> {
        if state_dim < 1 + polarization.extra() {
            return Err(Error::InvalidParameter(format!(
                "state_dim {} leaves no free channel after polarization",
                state_dim
            )));
        }
        let free = state_dim - polarization.extra();
        let free_diag: Vec<f64> = (0..free).map(|n| -((n + 1) as f64)).collect();
        let row = apply_polarization(&free_diag, polarization);
        let mut a_diag = Vec::with_capacity(channels * state_dim);
        for _ in 0..channels {
            a_diag.extend_from_slice(&row);
        }
        let scale = 1.0 / (channels as f64).sqrt();
        let mut w_delta = vec![0.0; channels * channels];
        rng.fill_uniform(&mut w_delta, scale);
        let mut w_b = vec![0.0; channels * state_dim];
        rng.fill_uniform(&mut w_b, scale);
        let mut w_c = vec![0.0; channels * state_dim];
        rng.fill_uniform(&mut w_c, scale);
        let delta_bias: Vec<f64> = (0..channels)
            .map(|_| softplus_inv(rng.uniform((1e-3f64).ln(), (1e-1f64).ln()).exp()))
            .collect();
        Ok(MambaParams {
            state_dim,
            channels,
            a_diag,
            w_delta,
            delta_bias,
            w_b,
            w_c,
            polarization,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = (self.state_dim, self.channels);
        for (name, len, want) in [
            ("a_diag", self.a_diag.len(), d * n),
            ("w_delta", self.w_delta.len(), d * d),
            ("delta_bias", self.delta_bias.len(), d),
            ("w_b", self.w_b.len(), d * n),
            ("w_c", self.w_c.len(), d * n),
        ] {
            if len != want {
                return Err(Error::ShapeMismatch(format!(
                    "mamba {name} has {len} entries, expected {want}"
                )));
            }
        }
        let lo = if self.polarization.one_channel { 1 } else { 0 };
        let hi = n - usize::from(self.polarization.zero_channel);
        for ch in 0..d {
            for j in lo..hi {
                if self.a_diag[ch * n + j] >= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "mamba a_diag[{ch},{j}] must be strictly negative, got {}",
                        self.a_diag[ch * n + j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Indices into `a_diag` that stay frozen (polarized columns of every
    /// channel row).
    pub fn frozen_indices(&self, tensor: &str) -> Vec<usize> {
        if tensor != "a_diag" || self.polarization.extra() == 0 {
            return Vec::new();
        }
        let n = self.state_dim;
        let mut idx = Vec::new();
        for ch in 0..self.channels {
            if self.polarization.one_channel {
                idx.push(ch * n);
            }
            if self.polarization.zero_channel {
                idx.push(ch * n + n - 1);
            }
        }
        idx
    }

    pub fn delta_at(&self, x_row: &[f64], d: usize) -> f64 {
        let dd = self.channels;
        let mut z = self.delta_bias[d];
        for (j, &xv) in x_row.iter().enumerate() {
            z += self.w_delta[j * dd + d] * xv;
        }
        softplus(z)
    }

    pub fn build(&self, x: &SequenceInput) -> Result<Vec<StepCoefficients<f64>>> {
        self.validate()?;
        if x.channels() != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels, parameters expect {}",
                x.channels(),
                self.channels
            )));
        }
        let (n, d_dim, t_len) = (self.state_dim, self.channels, x.t_len());

        // b_t and c_t are computed once per timestep and shared across
        // channels; Δ_t and the gates are per channel.
        let mut bproj = vec![0.0; t_len * n];
        let mut cproj = vec![0.0; t_len * n];
        let mut delta = vec![0.0; t_len * d_dim];
        for t in 0..t_len {
            let row = x.row(t);
            for j in 0..n {
                let mut sb = 0.0;
                let mut sc = 0.0;
                for (dd, &xv) in row.iter().enumerate() {
                    sb += self.w_b[dd * n + j] * xv;
                    sc += self.w_c[dd * n + j] * xv;
                }
                bproj[t * n + j] = sb;
                cproj[t * n + j] = sc;
            }
            for dd in 0..d_dim {
                delta[t * d_dim + dd] = self.delta_at(row, dd);
            }
        }

        let mut out = Vec::with_capacity(d_dim);
        for dd in 0..d_dim {
            let mut a = Vec::with_capacity(t_len * n);
            let mut b = Vec::with_capacity(t_len * n);
            let mut c = Vec::with_capacity(t_len * n);
            let mut dt = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let dtv = delta[t * d_dim + dd];
                let xv = x.at(t, dd);
                for j in 0..n {
                    a.push((dtv * self.a_diag[dd * n + j]).exp());
                    b.push(bproj[t * n + j] * xv);
                    c.push(cproj[t * n + j]);
                }
                dt.push(dtv);
            }
            out.push(StepCoefficients::new(
                t_len,
                n,
                DomainMode::Discrete,
                a,
                b,
                c,
                dt,
            )?);
        }
        Ok(out)
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("a_diag", self.a_diag.as_slice()),
            ("w_delta", self.w_delta.as_slice()),
            ("delta_bias", self.delta_bias.as_slice()),
            ("w_b", self.w_b.as_slice()),
            ("w_c", self.w_c.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("a_diag", self.a_diag.as_mut_slice()),
            ("w_delta", self.w_delta.as_mut_slice()),
            ("delta_bias", self.delta_bias.as_mut_slice()),
            ("w_b", self.w_b.as_mut_slice()),
            ("w_c", self.w_c.as_mut_slice()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;

    fn zero_input(t: usize, d: usize) -> SequenceInput {
        SequenceInput::new(vec![0.0; t * d], t, d).unwrap()
    }

    #[test]
    fn zero_input_gives_ln2_delta_and_zero_drive() {
        let mut rng = Rng64::new(3);
        let mut p = MambaParams::init(4, 2, PolarizationConfig::none(), &mut rng).unwrap();
        // Zero bias so Δ = softplus(0) = ln 2 on zero input.
        p.delta_bias = vec![0.0; 2];
        let coeffs = p.build(&zero_input(3, 2)).unwrap();
        for ch in &coeffs {
            for &dt in ch.delta() {
                assert!((dt - std::f64::consts::LN_2).abs() < 1e-15);
            }
            assert!(ch.b().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn softplus_matches_inverse_oracle() {
        // D=1, W_delta = 1, bias 0: x = 0.5412 → Δ ≈ 1.0.
        let p = MambaParams {
            state_dim: 1,
            channels: 1,
            a_diag: vec![-1.0],
            w_delta: vec![1.0],
            delta_bias: vec![0.0],
            w_b: vec![1.0],
            w_c: vec![1.0],
            polarization: PolarizationConfig::none(),
        };
        let x = SequenceInput::new(vec![0.5412], 1, 1).unwrap();
        let coeffs = p.build(&x).unwrap();
        assert!((coeffs[0].delta()[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn gates_strictly_inside_unit_interval() {
        let mut rng = Rng64::new(11);
        let p = MambaParams::init(6, 3, PolarizationConfig::none(), &mut rng).unwrap();
        for trial in 0..50 {
            let mut r = Rng64::new(1000 + trial);
            let x = SequenceInput::random(8, 3, &mut r);
            for ch in p.build(&x).unwrap() {
                for &g in ch.a() {
                    assert!(g > 0.0 && g < 1.0, "gate {g} escaped (0,1)");
                }
            }
        }
    }

    #[test]
    fn b_c_shared_across_channels_unaffected_by_w_delta() {
        let mut rng = Rng64::new(5);
        let mut p = MambaParams::init(4, 3, PolarizationConfig::none(), &mut rng).unwrap();
        let mut r = Rng64::new(77);
        let x = SequenceInput::random(6, 3, &mut r);
        let before = p.build(&x).unwrap();
        // Perturb channel 1's step-size weights only (column 1).
        for j in 0..3 {
            p.w_delta[j * 3 + 1] += 0.37;
        }
        p.delta_bias[1] -= 0.2;
        let after = p.build(&x).unwrap();
        for d in 0..3 {
            assert_eq!(before[d].b(), after[d].b(), "b must be untouched");
            assert_eq!(before[d].c(), after[d].c(), "c must be untouched");
            if d == 1 {
                assert_ne!(before[d].delta(), after[d].delta());
                assert_ne!(before[d].a(), after[d].a());
            } else {
                assert_eq!(before[d].delta(), after[d].delta());
                assert_eq!(before[d].a(), after[d].a());
            }
        }
    }

    #[test]
    fn shape_mismatch_reports_channels() {
        let mut rng = Rng64::new(8);
        let p = MambaParams::init(4, 3, PolarizationConfig::none(), &mut rng).unwrap();
        let x = zero_input(4, 2);
        assert!(matches!(p.build(&x), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn polarized_rows_pinned() {
        let mut rng = Rng64::new(13);
        let p = MambaParams::init(5, 2, PolarizationConfig::both(), &mut rng).unwrap();
        for ch in 0..2 {
            assert_eq!(p.a_diag[ch * 5], 0.0);
            assert_eq!(p.a_diag[ch * 5 + 4], -1000.0);
            for j in 1..4 {
                assert!(p.a_diag[ch * 5 + j] < 0.0);
            }
        }
        assert_eq!(p.frozen_indices("a_diag"), vec![0, 4, 5, 9]);
        assert!(p.frozen_indices("w_b").is_empty());
    }
}
