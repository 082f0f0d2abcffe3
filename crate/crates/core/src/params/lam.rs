//! Linear-attention family members recast as diagonal recurrences. Each
//! variant fills the (a_t, b_t, c_t, Δ_t) tuple from its own key/query/value
//! and gating maps; key/query maps here are plain linear maps.

use super::{sigmoid, softplus};
use crate::coeffs::{DomainMode, SequenceInput, StepCoefficients};
use crate::error::Error;
use crate::rng::Rng64;
use crate::Result;

fn matvec(w: &[f64], x: &[f64], out_dim: usize) -> Vec<f64> {
    // w laid out (in_dim × out_dim) row-major.
    let mut out = vec![0.0; out_dim];
    for (j, &xv) in x.iter().enumerate() {
        let row = &w[j * out_dim..(j + 1) * out_dim];
        for (o, &wv) in row.iter().enumerate() {
            out[o] += wv * xv;
        }
    }
    out
}

fn check_input(channels: usize, x: &SequenceInput) -> Result<()> {
    if x.channels() != channels {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, parameters expect {}",
            x.channels(),
            channels
        )));
    }
    Ok(())
}

/// Identity gates: a_t = 1 exactly, no decay. b = k(x), c = q(x), Δ = v(x).
#[derive(Clone, Debug)]
pub struct LaParams {
    pub state_dim: usize,
    pub channels: usize,
    pub w_k: Vec<f64>,
    pub w_q: Vec<f64>,
    pub w_v: Vec<f64>,
}

impl LaParams {
    pub fn init(state_dim: usize, channels: usize, rng: &mut Rng64) -> Self {
        let scale = 1.0 / (channels as f64).sqrt();
        let mut w_k = vec![0.0; channels * state_dim];
        let mut w_q = vec![0.0; channels * state_dim];
        let mut w_v = vec![0.0; channels * channels];
        rng.fill_uniform(&mut w_k, scale);
        rng.fill_uniform(&mut w_q, scale);
        rng.fill_uniform(&mut w_v, scale);
        LaParams {
            state_dim,
            channels,
            w_k,
            w_q,
            w_v,
        }
    }

    pub fn build(&self, x: &SequenceInput) -> Result<Vec<StepCoefficients<f64>>> {
        check_input(self.channels, x)?;
        build_kqv(
            self.state_dim,
            self.channels,
            x,
            &self.w_k,
            &self.w_q,
            &self.w_v,
            |_t, _d| 1.0,
        )
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![("w_k", &self.w_k[..]), ("w_q", &self.w_q[..]), ("w_v", &self.w_v[..])]
    }
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w_k", self.w_k.as_mut_slice()),
            ("w_q", self.w_q.as_mut_slice()),
            ("w_v", self.w_v.as_mut_slice()),
        ]
    }
}

/// Constant learned decay: a_t = γ with γ in (0,1); otherwise as LA.
#[derive(Clone, Debug)]
pub struct RetNetParams {
    pub state_dim: usize,
    pub channels: usize,
    pub gamma: f64,
    pub w_k: Vec<f64>,
    pub w_q: Vec<f64>,
    pub w_v: Vec<f64>,
}

impl RetNetParams {
    pub fn init(state_dim: usize, channels: usize, rng: &mut Rng64) -> Self {
        let la = LaParams::init(state_dim, channels, rng);
        RetNetParams {
            state_dim,
            channels,
            gamma: rng.uniform(0.8, 0.99),
            w_k: la.w_k,
            w_q: la.w_q,
            w_v: la.w_v,
        }
    }

    pub fn build(&self, x: &SequenceInput) -> Result<Vec<StepCoefficients<f64>>> {
        check_input(self.channels, x)?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "retnet gamma must lie in (0,1), got {}",
                self.gamma
            )));
        }
        let g = self.gamma;
        build_kqv(
            self.state_dim,
            self.channels,
            x,
            &self.w_k,
            &self.w_q,
            &self.w_v,
            move |_t, _d| g,
        )
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("gamma", std::slice::from_ref(&self.gamma)),
            ("w_k", &self.w_k[..]),
            ("w_q", &self.w_q[..]),
            ("w_v", &self.w_v[..]),
        ]
    }
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("gamma", std::slice::from_mut(&mut self.gamma)),
            ("w_k", self.w_k.as_mut_slice()),
            ("w_q", self.w_q.as_mut_slice()),
            ("w_v", self.w_v.as_mut_slice()),
        ]
    }
}

/// Shared helper for LA/RetNet: shared k/q maps, per-channel value scalar,
/// gate supplied by the caller (constant per variant).
fn build_kqv(
    n: usize,
    d_dim: usize,
    x: &SequenceInput,
    w_k: &[f64],
    w_q: &[f64],
    w_v: &[f64],
    gate: impl Fn(usize, usize) -> f64,
) -> Result<Vec<StepCoefficients<f64>>> {
    let t_len = x.t_len();
    let mut k = vec![0.0; t_len * n];
    let mut q = vec![0.0; t_len * n];
    let mut v = vec![0.0; t_len * d_dim];
    for t in 0..t_len {
        k[t * n..(t + 1) * n].copy_from_slice(&matvec(w_k, x.row(t), n));
        q[t * n..(t + 1) * n].copy_from_slice(&matvec(w_q, x.row(t), n));
        v[t * d_dim..(t + 1) * d_dim].copy_from_slice(&matvec(w_v, x.row(t), d_dim));
    }
    let mut out = Vec::with_capacity(d_dim);
    for dd in 0..d_dim {
        let mut a = Vec::with_capacity(t_len * n);
        let mut delta = Vec::with_capacity(t_len);
        for t in 0..t_len {
            for _ in 0..n {
                a.push(gate(t, dd));
            }
            delta.push(v[t * d_dim + dd]);
        }
        out.push(StepCoefficients::new(
            t_len,
            n,
            DomainMode::Discrete,
            a,
            k.clone(),
            q.clone(),
            delta,
        )?);
    }
    Ok(out)
}

/// Input-dependent sigmoid gates shared across channels; per-channel k/q
/// maps stacked into D×(D·N) blocks.
#[derive(Clone, Debug)]
pub struct GlaParams {
    pub state_dim: usize,
    pub channels: usize,
    pub w_alpha: Vec<f64>,
    pub w_k: Vec<f64>,
    pub w_q: Vec<f64>,
    pub w_v: Vec<f64>,
}

impl GlaParams {
    pub fn init(state_dim: usize, channels: usize, rng: &mut Rng64) -> Self {
        let scale = 1.0 / (channels as f64).sqrt();
        let mut w_alpha = vec![0.0; channels * state_dim];
        let mut w_k = vec![0.0; channels * channels * state_dim];
        let mut w_q = vec![0.0; channels * channels * state_dim];
        let mut w_v = vec![0.0; channels * channels];
        rng.fill_uniform(&mut w_alpha, scale);
        rng.fill_uniform(&mut w_k, scale);
        rng.fill_uniform(&mut w_q, scale);
        rng.fill_uniform(&mut w_v, scale);
        GlaParams {
            state_dim,
            channels,
            w_alpha,
            w_k,
            w_q,
            w_v,
        }
    }

    pub fn build(&self, x: &SequenceInput) -> Result<Vec<StepCoefficients<f64>>> {
        check_input(self.channels, x)?;
        let (n, d_dim, t_len) = (self.state_dim, self.channels, x.t_len());
        let dn = d_dim * n;
        let mut alpha = vec![0.0; t_len * n];
        let mut kall = vec![0.0; t_len * dn];
        let mut qall = vec![0.0; t_len * dn];
        let mut v = vec![0.0; t_len * d_dim];
        for t in 0..t_len {
            let logits = matvec(&self.w_alpha, x.row(t), n);
            for (j, &z) in logits.iter().enumerate() {
                alpha[t * n + j] = sigmoid(z);
            }
            kall[t * dn..(t + 1) * dn].copy_from_slice(&matvec(&self.w_k, x.row(t), dn));
            qall[t * dn..(t + 1) * dn].copy_from_slice(&matvec(&self.w_q, x.row(t), dn));
            v[t * d_dim..(t + 1) * d_dim].copy_from_slice(&matvec(&self.w_v, x.row(t), d_dim));
        }
        let mut out = Vec::with_capacity(d_dim);
        for dd in 0..d_dim {
            let mut a = Vec::with_capacity(t_len * n);
            let mut b = Vec::with_capacity(t_len * n);
            let mut c = Vec::with_capacity(t_len * n);
            let mut delta = Vec::with_capacity(t_len);
            for t in 0..t_len {
                for j in 0..n {
                    a.push(alpha[t * n + j]);
                    b.push(kall[t * dn + dd * n + j]);
                    c.push(qall[t * dn + dd * n + j]);
                }
                delta.push(v[t * d_dim + dd]);
            }
            out.push(StepCoefficients::new(
                t_len,
                n,
                DomainMode::Discrete,
                a,
                b,
                c,
                delta,
            )?);
        }
        Ok(out)
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w_alpha", &self.w_alpha[..]),
            ("w_k", &self.w_k[..]),
            ("w_q", &self.w_q[..]),
            ("w_v", &self.w_v[..]),
        ]
    }
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w_alpha", self.w_alpha.as_mut_slice()),
            ("w_k", self.w_k.as_mut_slice()),
            ("w_q", self.w_q.as_mut_slice()),
            ("w_v", self.w_v.as_mut_slice()),
        ]
    }
}

/// Normalized two-way gate: a_t = e^{-w} / (e^{-w} + e^{k(x)}) and
/// Δ_t = e^{k(x)} / (e^{-w} + e^{k(x)}), so a_t + Δ_t = 1 identically. Δ is
/// computed as 1 - a_t, which keeps the identity exact in floating point.
#[derive(Clone, Debug)]
pub struct RwkvParams {
    pub state_dim: usize,
    pub channels: usize,
    /// D positive decay coefficients.
    pub w: Vec<f64>,
    pub w_k: Vec<f64>,
    pub w_v: Vec<f64>,
    pub w_q: Vec<f64>,
}

impl RwkvParams {
    pub fn init(state_dim: usize, channels: usize, rng: &mut Rng64) -> Self {
        let scale = 1.0 / (channels as f64).sqrt();
        let w: Vec<f64> = (0..channels).map(|_| rng.uniform(0.2, 2.0)).collect();
        let mut w_k = vec![0.0; channels * channels];
        let mut w_v = vec![0.0; channels * state_dim];
        let mut w_q = vec![0.0; channels * state_dim];
        rng.fill_uniform(&mut w_k, scale);
        rng.fill_uniform(&mut w_v, scale);
        rng.fill_uniform(&mut w_q, scale);
        RwkvParams {
            state_dim,
            channels,
            w,
            w_k,
            w_v,
            w_q,
        }
    }

    pub fn build(&self, x: &SequenceInput) -> Result<Vec<StepCoefficients<f64>>> {
        check_input(self.channels, x)?;
        if let Some(d) = self.w.iter().position(|&w| w <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rwkv decay w[{d}] must be positive, got {}",
                self.w[d]
            )));
        }
        let (n, d_dim, t_len) = (self.state_dim, self.channels, x.t_len());
        let mut bshared = vec![0.0; t_len * n];
        let mut cshared = vec![0.0; t_len * n];
        let mut gate = vec![0.0; t_len * d_dim];
        for t in 0..t_len {
            bshared[t * n..(t + 1) * n].copy_from_slice(&matvec(&self.w_v, x.row(t), n));
            cshared[t * n..(t + 1) * n].copy_from_slice(&matvec(&self.w_q, x.row(t), n));
            let klog = matvec(&self.w_k, x.row(t), d_dim);
            for dd in 0..d_dim {
                // e^{-w} / (e^{-w} + e^{k}) = sigmoid(-(k + w))
                gate[t * d_dim + dd] = sigmoid(-(klog[dd] + self.w[dd]));
            }
        }
        let mut out = Vec::with_capacity(d_dim);
        for dd in 0..d_dim {
            let mut a = Vec::with_capacity(t_len * n);
            let mut delta = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let g = gate[t * d_dim + dd];
                for _ in 0..n {
                    a.push(g);
                }
                delta.push(1.0 - g);
            }
            out.push(StepCoefficients::new(
                t_len,
                n,
                DomainMode::Discrete,
                a,
                bshared.clone(),
                cshared.clone(),
                delta,
            )?);
        }
        Ok(out)
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w", &self.w[..]),
            ("w_k", &self.w_k[..]),
            ("w_v", &self.w_v[..]),
            ("w_q", &self.w_q[..]),
        ]
    }
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w", self.w.as_mut_slice()),
            ("w_k", self.w_k.as_mut_slice()),
            ("w_v", self.w_v.as_mut_slice()),
            ("w_q", self.w_q.as_mut_slice()),
        ]
    }
}

/// Gated unit whose state dimension equals the input dimension: per channel
/// a scalar state with gate α computed in log-space,
/// log α = -ξ softplus(Γ) ⊙ sigmoid(W_a x + b_a), input gate
/// i = sigmoid(W_x x + b_x), and Δ = sqrt(1 - α²).
#[derive(Clone, Debug)]
pub struct GriffinParams {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub w_a: Vec<f64>,
    pub b_a: Vec<f64>,
    pub w_x: Vec<f64>,
    pub b_x: Vec<f64>,
    /// Fixed log-space scale constant (not trained).
    pub xi: f64,
}

impl GriffinParams {
    pub const DEFAULT_XI: f64 = 8.0;

    pub fn init(channels: usize, rng: &mut Rng64) -> Self {
        let scale = 1.0 / (channels as f64).sqrt();
        // Γ chosen so that at sigmoid ≈ 0.5 the gates start near 0.95.
        let gamma: Vec<f64> = (0..channels).map(|_| rng.uniform(-4.6, -4.0)).collect();
        let mut w_a = vec![0.0; channels * channels];
        let mut w_x = vec![0.0; channels * channels];
        rng.fill_uniform(&mut w_a, scale);
        rng.fill_uniform(&mut w_x, scale);
        GriffinParams {
            channels,
            gamma,
            w_a,
            b_a: vec![0.0; channels],
            w_x,
            b_x: vec![0.0; channels],
            xi: Self::DEFAULT_XI,
        }
    }

    pub fn build(&self, x: &SequenceInput) -> Result<Vec<StepCoefficients<f64>>> {
        check_input(self.channels, x)?;
        let (d_dim, t_len) = (self.channels, x.t_len());
        let mut alpha = vec![0.0; t_len * d_dim];
        let mut igate = vec![0.0; t_len * d_dim];
        for t in 0..t_len {
            let za = matvec(&self.w_a, x.row(t), d_dim);
            let zx = matvec(&self.w_x, x.row(t), d_dim);
            for dd in 0..d_dim {
                let sa = sigmoid(za[dd] + self.b_a[dd]);
                alpha[t * d_dim + dd] = (-self.xi * softplus(self.gamma[dd]) * sa).exp();
                igate[t * d_dim + dd] = sigmoid(zx[dd] + self.b_x[dd]);
            }
        }
        let mut out = Vec::with_capacity(d_dim);
        for dd in 0..d_dim {
            let mut a = Vec::with_capacity(t_len);
            let mut b = Vec::with_capacity(t_len);
            let mut delta = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let al = alpha[t * d_dim + dd];
                a.push(al);
                b.push(igate[t * d_dim + dd]);
                delta.push((1.0 - al * al).sqrt());
            }
            out.push(StepCoefficients::new(
                t_len,
                1,
                DomainMode::Discrete,
                a,
                b,
                vec![1.0; t_len],
                delta,
            )?);
        }
        Ok(out)
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("gamma", &self.gamma[..]),
            ("w_a", &self.w_a[..]),
            ("b_a", &self.b_a[..]),
            ("w_x", &self.w_x[..]),
            ("b_x", &self.b_x[..]),
        ]
    }
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("gamma", self.gamma.as_mut_slice()),
            ("w_a", self.w_a.as_mut_slice()),
            ("b_a", self.b_a.as_mut_slice()),
            ("w_x", self.w_x.as_mut_slice()),
            ("b_x", self.b_x.as_mut_slice()),
        ]
    }
}
