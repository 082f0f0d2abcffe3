//! Parameterizations: maps from learnable weights and an input sequence to
//! per-channel coefficient streams, plus gate polarization.

mod lam;
mod mamba;
mod s4;

pub use lam::{GlaParams, GriffinParams, LaParams, RetNetParams, RwkvParams};
pub use mamba::MambaParams;
pub use s4::S4Params;

use crate::coeffs::{SequenceInput, StepCoefficients};
use crate::error::Error;
use crate::rng::Rng64;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Numerically stable softplus ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of softplus: ln(e^y - 1) for y > 0.
pub fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0);
    if y > 30.0 {
        y
    } else {
        (y.exp() - 1.0).ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pre-exponential value for a gate pinned to (numerical) zero. After
/// exp(Δ·) the gate underflows once Δ is past ~0.7; at smaller Δ it is a
/// fast-decaying but nonzero gate, which is the faithful behavior of the
/// construction.
pub const ZERO_POLE: f64 = -1000.0;

/// Which state channels get pinned gates: prepend a channel whose
/// pre-exponential entry is 0 (gate exactly 1, lossless history) and/or
/// append one at ZERO_POLE (gate numerically 0, current-token isolation).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarizationConfig {
    pub one_channel: bool,
    pub zero_channel: bool,
}

impl PolarizationConfig {
    pub fn none() -> Self {
        Self::default()
    }
    pub fn both() -> Self {
        PolarizationConfig {
            one_channel: true,
            zero_channel: true,
        }
    }
    pub fn one_only() -> Self {
        PolarizationConfig {
            one_channel: true,
            zero_channel: false,
        }
    }
    pub fn zero_only() -> Self {
        PolarizationConfig {
            one_channel: false,
            zero_channel: true,
        }
    }
    /// Number of pinned channels.
    pub fn extra(&self) -> usize {
        self.one_channel as usize + self.zero_channel as usize
    }
}

/// Extend a pre-exponential diagonal with the pinned channels:
/// [0, A, -1000] (or the one-sided variants). State dimension grows by the
/// number of enabled flags.
pub fn apply_polarization(pre_exp: &[f64], config: PolarizationConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(pre_exp.len() + config.extra());
    if config.one_channel {
        out.push(0.0);
    }
    out.extend_from_slice(pre_exp);
    if config.zero_channel {
        out.push(ZERO_POLE);
    }
    out
}

/// The parameterization families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    S4,
    Mamba,
    La,
    RetNet,
    Gla,
    Rwkv,
    Griffin,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::S4,
        Variant::Mamba,
        Variant::La,
        Variant::RetNet,
        Variant::Gla,
        Variant::Rwkv,
        Variant::Griffin,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::S4 => "s4",
            Variant::Mamba => "mamba",
            Variant::La => "la",
            Variant::RetNet => "retnet",
            Variant::Gla => "gla",
            Variant::Rwkv => "rwkv",
            Variant::Griffin => "griffin",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

/// A parameter set of any variant, with the shared build/init/tensor API.
#[derive(Clone, Debug)]
pub enum AnyParams {
    S4(S4Params),
    Mamba(MambaParams),
    La(LaParams),
    RetNet(RetNetParams),
    Gla(GlaParams),
    Rwkv(RwkvParams),
    Griffin(GriffinParams),
}

impl AnyParams {
    pub fn variant(&self) -> Variant {
        match self {
            AnyParams::S4(_) => Variant::S4,
            AnyParams::Mamba(_) => Variant::Mamba,
            AnyParams::La(_) => Variant::La,
            AnyParams::RetNet(_) => Variant::RetNet,
            AnyParams::Gla(_) => Variant::Gla,
            AnyParams::Rwkv(_) => Variant::Rwkv,
            AnyParams::Griffin(_) => Variant::Griffin,
        }
    }

    /// Per-channel state dimension emitted by the builder.
    pub fn state_dim(&self) -> usize {
        match self {
            AnyParams::S4(p) => p.state_dim(),
            AnyParams::Mamba(p) => p.state_dim,
            AnyParams::La(p) => p.state_dim,
            AnyParams::RetNet(p) => p.state_dim,
            AnyParams::Gla(p) => p.state_dim,
            AnyParams::Rwkv(p) => p.state_dim,
            AnyParams::Griffin(_) => 1,
        }
    }

    /// Deterministic initialization. `state_dim` counts pinned polarization
    /// channels; with both flags enabled it must be at least 3 so a free
    /// channel remains. Diagonals start at negative integers -(n+1); dense
    /// weights are uniform with scale 1/sqrt(D); the Δ bias places the
    /// initial step size in [1e-3, 1e-1].
    pub fn init(
        variant: Variant,
        state_dim: usize,
        channels: usize,
        polarization: PolarizationConfig,
        seed: u64,
    ) -> Result<AnyParams> {
        if state_dim == 0 || channels == 0 {
            return Err(Error::InvalidParameter(
                "state_dim and channels must be at least 1".into(),
            ));
        }
        if polarization.extra() > 0 && variant != Variant::Mamba {
            return Err(Error::InvalidParameter(format!(
                "polarization is defined for the mamba variant, not {}",
                variant.name()
            )));
        }
        if state_dim < 1 + polarization.extra() {
            return Err(Error::InvalidParameter(format!(
                "state_dim {} too small for polarization config (needs at least {})",
                state_dim,
                1 + polarization.extra()
            )));
        }
        let mut rng = Rng64::new(seed);
        Ok(match variant {
            Variant::S4 => AnyParams::S4(S4Params::init(state_dim, &mut rng)?),
            Variant::Mamba => {
                AnyParams::Mamba(MambaParams::init(state_dim, channels, polarization, &mut rng)?)
            }
            Variant::La => AnyParams::La(LaParams::init(state_dim, channels, &mut rng)),
            Variant::RetNet => AnyParams::RetNet(RetNetParams::init(state_dim, channels, &mut rng)),
            Variant::Gla => AnyParams::Gla(GlaParams::init(state_dim, channels, &mut rng)),
            Variant::Rwkv => AnyParams::Rwkv(RwkvParams::init(state_dim, channels, &mut rng)),
            Variant::Griffin => AnyParams::Griffin(GriffinParams::init(channels, &mut rng)),
        })
    }

    /// Evaluate the parameterization on an input, one coefficient stream per
    /// input channel.
    pub fn build(&self, x: &SequenceInput) -> Result<Vec<StepCoefficients<f64>>> {
        match self {
            AnyParams::S4(p) => p.build(x),
            AnyParams::Mamba(p) => p.build(x),
            AnyParams::La(p) => p.build(x),
            AnyParams::RetNet(p) => p.build(x),
            AnyParams::Gla(p) => p.build(x),
            AnyParams::Rwkv(p) => p.build(x),
            AnyParams::Griffin(p) => p.build(x),
        }
    }

    /// Named flat views of every learnable tensor.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            AnyParams::S4(p) => p.tensors(),
            AnyParams::Mamba(p) => p.tensors(),
            AnyParams::La(p) => p.tensors(),
            AnyParams::RetNet(p) => p.tensors(),
            AnyParams::Gla(p) => p.tensors(),
            AnyParams::Rwkv(p) => p.tensors(),
            AnyParams::Griffin(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        match self {
            AnyParams::S4(p) => p.tensors_mut(),
            AnyParams::Mamba(p) => p.tensors_mut(),
            AnyParams::La(p) => p.tensors_mut(),
            AnyParams::RetNet(p) => p.tensors_mut(),
            AnyParams::Gla(p) => p.tensors_mut(),
            AnyParams::Rwkv(p) => p.tensors_mut(),
            AnyParams::Griffin(p) => p.tensors_mut(),
        }
    }

    /// Indices into the named tensor that must stay frozen during training
    /// (the pinned polarization entries of the pre-exponential diagonal).
    pub fn frozen_indices(&self, tensor: &str) -> Vec<usize> {
        match self {
            AnyParams::Mamba(p) => p.frozen_indices(tensor),
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polarization_layouts() {
        let base = vec![-1.0, -2.0];
        assert_eq!(
            apply_polarization(&base, PolarizationConfig::both()),
            vec![0.0, -1.0, -2.0, -1000.0]
        );
        assert_eq!(
            apply_polarization(&[-1.0], PolarizationConfig::one_only()),
            vec![0.0, -1.0]
        );
        assert_eq!(
            apply_polarization(&[-1.0], PolarizationConfig::zero_only()),
            vec![-1.0, -1000.0]
        );
    }

    #[test]
    fn polarized_gates_after_exponential() {
        let pre = apply_polarization(&[-1.0, -2.0], PolarizationConfig::both());
        let delta = 1.0;
        let gates: Vec<f64> = pre.iter().map(|a| (delta * a).exp()).collect();
        assert_eq!(gates[0], 1.0);
        assert!((gates[1] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((gates[2] - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(gates[3], 0.0);
    }

    #[test]
    fn one_gate_is_exactly_one_for_any_delta() {
        for delta in [1e-3, 0.037, 0.5, 1.0, 10.0] {
            assert_eq!((delta * 0.0f64).exp(), 1.0);
        }
    }

    #[test]
    fn zero_gate_underflow_threshold() {
        // The pinned -1000 entry underflows below 1e-300 once Δ clears ~0.7;
        // at Δ = 1e-3 it is e^{-1}, small but decidedly nonzero.
        assert!((ZERO_POLE * 0.75f64).exp() < 1e-300);
        assert!(((ZERO_POLE * 1e-3f64).exp() - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn init_is_deterministic() {
        for variant in Variant::ALL {
            let a = AnyParams::init(variant, 4, 3, PolarizationConfig::none(), 99).unwrap();
            let b = AnyParams::init(variant, 4, 3, PolarizationConfig::none(), 99).unwrap();
            for ((na, ta), (nb, tb)) in a.tensors().iter().zip(b.tensors().iter()) {
                assert_eq!(na, nb);
                assert_eq!(ta, tb, "tensor {na} differs between identical seeds");
            }
        }
    }

    #[test]
    fn init_rejects_too_small_state() {
        let err =
            AnyParams::init(Variant::Mamba, 2, 2, PolarizationConfig::both(), 1).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn initial_step_sizes_in_declared_range() {
        // Δ on zero input is softplus(bias): must land in [1e-3, 1e-1].
        for seed in 0..20 {
            let p = AnyParams::init(Variant::Mamba, 4, 3, PolarizationConfig::none(), seed)
                .unwrap();
            if let AnyParams::Mamba(m) = &p {
                for &b in &m.delta_bias {
                    let dt = softplus(b);
                    assert!((1e-3..=1e-1).contains(&dt), "Δ(0) = {dt}");
                }
            }
        }
        for seed in 0..20 {
            if let AnyParams::S4(sp) =
                AnyParams::init(Variant::S4, 4, 1, PolarizationConfig::none(), seed).unwrap()
            {
                assert!((1e-3..=1e-1).contains(&sp.delta));
            }
        }
    }

    #[test]
    fn softplus_roundtrip_and_value() {
        assert!((softplus(softplus_inv(0.05)) - 0.05).abs() < 1e-12);
        // softplus(0.5412) ≈ 1.0
        assert!((softplus(0.5412) - 1.0).abs() < 1e-3);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
