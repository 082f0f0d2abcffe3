//! Taped forward pass of one mixer layer: input sequence in, per-channel
//! scalar outputs out, with handles to the interesting intermediate values
//! (step sizes, gates, drives, states) for diagnostics.

use super::tape::{Tape, ValId};
use crate::coeffs::SequenceInput;
use crate::error::Error;
use crate::params::AnyParams;
use crate::Result;

/// Named parameter leaves registered on a tape, so gradients can be read
/// back out by tensor name after a backward sweep.
#[derive(Default)]
pub struct Bindings {
    items: Vec<(String, ValId)>,
}

impl Bindings {
    pub fn new() -> Self {
        Bindings { items: Vec::new() }
    }
    pub fn bind(&mut self, name: impl Into<String>, id: ValId) {
        self.items.push((name.into(), id));
    }
    pub fn iter(&self) -> impl Iterator<Item = (&str, ValId)> {
        self.items.iter().map(|(n, v)| (n.as_str(), *v))
    }
    pub fn lookup(&self, name: &str) -> Option<ValId> {
        self.items.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Value handles produced by one mixer forward.
pub struct LayerForward {
    /// T×D mixer outputs y_t.
    pub y: ValId,
    /// T×D per-channel step sizes Δ_t.
    pub delta: ValId,
    /// T×(D·N) post-exponential gates a_t.
    pub gates: ValId,
    /// T×(D·N) drive terms Δ_t b_t.
    pub drive: ValId,
    /// T×(D·N) stacked states h_t.
    pub states: ValId,
    /// T×N encoded tokens b_t shared across channels where the variant
    /// shares them (otherwise equals the per-channel layout).
    pub encoded: ValId,
    /// Per-channel state dimension.
    pub state_dim: usize,
    /// Mamba only: the Δ_t·x_t product feeding the drive, used to isolate
    /// the drive-path Δ gradient in the polarization check.
    pub delta_x: Option<ValId>,
}

/// Register x as a (non-trainable by default) leaf.
pub fn input_leaf(tape: &mut Tape, x: &SequenceInput) -> ValId {
    tape.leaf(x.values().to_vec(), x.t_len(), x.channels(), true)
}

fn leaf_named(
    tape: &mut Tape,
    binds: &mut Bindings,
    prefix: &str,
    name: &str,
    data: &[f64],
    rows: usize,
    cols: usize,
) -> ValId {
    let id = tape.leaf(data.to_vec(), rows, cols, true);
    if prefix.is_empty() {
        binds.bind(name, id);
    } else {
        binds.bind(format!("{prefix}{name}"), id);
    }
    id
}

/// Build the taped coefficient construction and scan for any variant.
/// `prefix` namespaces the parameter bindings (e.g. "block0.mixer.").
pub fn layer_forward(
    tape: &mut Tape,
    params: &AnyParams,
    x_id: ValId,
    prefix: &str,
    binds: &mut Bindings,
) -> Result<LayerForward> {
    let t_len = tape.value(x_id).rows;
    let d_dim = tape.value(x_id).cols;

    match params {
        AnyParams::S4(p) => {
            p.validate()?;
            if !p.is_real() {
                return Err(Error::InvalidParameter(
                    "taped forward requires the real s4 parameterization".into(),
                ));
            }
            let n = p.state_dim();
            let a_diag = leaf_named(tape, binds, prefix, "a_diag", &p.a_re, 1, n);
            let b = leaf_named(tape, binds, prefix, "b", &p.b, 1, n);
            let c = leaf_named(tape, binds, prefix, "c", &p.c, 1, n);
            let delta = leaf_named(tape, binds, prefix, "delta", &[p.delta], 1, 1);

            let da = tape.mul_scalar(a_diag, delta);
            let gate_row = tape.exp(da);
            let gate_t = tape.repeat_rows(gate_row, t_len);
            let gates = tape.tile_channels(gate_t, d_dim);

            let bd = tape.mul_scalar(b, delta);
            let bd_t = tape.repeat_rows(bd, t_len);
            let drive = tape.outer_td(x_id, bd_t);

            let (states, _) = tape.scan(gates, drive);
            let c_t = tape.repeat_rows(c, t_len);
            let c_tiled = tape.tile_channels(c_t, d_dim);
            let y = tape.grouped_dot(c_tiled, states, n);
            let delta_td = tape.broadcast(delta, t_len, d_dim);
            Ok(LayerForward {
                y,
                delta: delta_td,
                gates,
                drive,
                states,
                encoded: bd_t,
                state_dim: n,
                delta_x: None,
            })
        }
        AnyParams::Mamba(p) => {
            p.validate()?;
            if d_dim != p.channels {
                return Err(Error::ShapeMismatch(format!(
                    "input has {} channels, parameters expect {}",
                    d_dim, p.channels
                )));
            }
            let n = p.state_dim;
            let a_diag = leaf_named(tape, binds, prefix, "a_diag", &p.a_diag, d_dim, n);
            let w_delta = leaf_named(tape, binds, prefix, "w_delta", &p.w_delta, d_dim, d_dim);
            let d_bias = leaf_named(tape, binds, prefix, "delta_bias", &p.delta_bias, 1, d_dim);
            let w_b = leaf_named(tape, binds, prefix, "w_b", &p.w_b, d_dim, n);
            let w_c = leaf_named(tape, binds, prefix, "w_c", &p.w_c, d_dim, n);

            let zd_lin = tape.linear(x_id, w_delta);
            let zd = tape.row_add(zd_lin, d_bias);
            let delta = tape.softplus(zd);
            let gates = tape.exp_dt_a(delta, a_diag);

            let bproj = tape.linear(x_id, w_b);
            let cproj = tape.linear(x_id, w_c);
            let u = tape.mul(delta, x_id);
            let drive = tape.outer_td(u, bproj);

            let (states, _) = tape.scan(gates, drive);
            let c_tiled = tape.tile_channels(cproj, d_dim);
            let y = tape.grouped_dot(c_tiled, states, n);
            Ok(LayerForward {
                y,
                delta,
                gates,
                drive,
                states,
                encoded: bproj,
                state_dim: n,
                delta_x: Some(u),
            })
        }
        AnyParams::La(p) => {
            if d_dim != p.channels {
                return Err(Error::ShapeMismatch("la channel mismatch".into()));
            }
            let n = p.state_dim;
            let w_k = leaf_named(tape, binds, prefix, "w_k", &p.w_k, d_dim, n);
            let w_q = leaf_named(tape, binds, prefix, "w_q", &p.w_q, d_dim, n);
            let w_v = leaf_named(tape, binds, prefix, "w_v", &p.w_v, d_dim, d_dim);

            let k = tape.linear(x_id, w_k);
            let q = tape.linear(x_id, w_q);
            let delta = tape.linear(x_id, w_v);
            let gates = tape.leaf(vec![1.0; t_len * d_dim * n], t_len, d_dim * n, false);
            let drive = tape.outer_td(delta, k);
            let (states, _) = tape.scan(gates, drive);
            let q_tiled = tape.tile_channels(q, d_dim);
            let y = tape.grouped_dot(q_tiled, states, n);
            Ok(LayerForward {
                y,
                delta,
                gates,
                drive,
                states,
                encoded: k,
                state_dim: n,
                delta_x: None,
            })
        }
        AnyParams::RetNet(p) => {
            if d_dim != p.channels {
                return Err(Error::ShapeMismatch("retnet channel mismatch".into()));
            }
            if !(p.gamma > 0.0 && p.gamma < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "retnet gamma must lie in (0,1), got {}",
                    p.gamma
                )));
            }
            let n = p.state_dim;
            let gamma = leaf_named(tape, binds, prefix, "gamma", &[p.gamma], 1, 1);
            let w_k = leaf_named(tape, binds, prefix, "w_k", &p.w_k, d_dim, n);
            let w_q = leaf_named(tape, binds, prefix, "w_q", &p.w_q, d_dim, n);
            let w_v = leaf_named(tape, binds, prefix, "w_v", &p.w_v, d_dim, d_dim);

            let k = tape.linear(x_id, w_k);
            let q = tape.linear(x_id, w_q);
            let delta = tape.linear(x_id, w_v);
            let gates = tape.broadcast(gamma, t_len, d_dim * n);
            let drive = tape.outer_td(delta, k);
            let (states, _) = tape.scan(gates, drive);
            let q_tiled = tape.tile_channels(q, d_dim);
            let y = tape.grouped_dot(q_tiled, states, n);
            Ok(LayerForward {
                y,
                delta,
                gates,
                drive,
                states,
                encoded: k,
                state_dim: n,
                delta_x: None,
            })
        }
        AnyParams::Gla(p) => {
            if d_dim != p.channels {
                return Err(Error::ShapeMismatch("gla channel mismatch".into()));
            }
            let n = p.state_dim;
            let dn = d_dim * n;
            let w_alpha = leaf_named(tape, binds, prefix, "w_alpha", &p.w_alpha, d_dim, n);
            let w_k = leaf_named(tape, binds, prefix, "w_k", &p.w_k, d_dim, dn);
            let w_q = leaf_named(tape, binds, prefix, "w_q", &p.w_q, d_dim, dn);
            let w_v = leaf_named(tape, binds, prefix, "w_v", &p.w_v, d_dim, d_dim);

            let alpha_logits = tape.linear(x_id, w_alpha);
            let alpha = tape.sigmoid(alpha_logits);
            let gates = tape.tile_channels(alpha, d_dim);
            let kall = tape.linear(x_id, w_k);
            let qall = tape.linear(x_id, w_q);
            let delta = tape.linear(x_id, w_v);
            let delta_tiled = tape.tile_states(delta, n);
            let drive = tape.mul(delta_tiled, kall);
            let (states, _) = tape.scan(gates, drive);
            let y = tape.grouped_dot(qall, states, n);
            Ok(LayerForward {
                y,
                delta,
                gates,
                drive,
                states,
                encoded: kall,
                state_dim: n,
                delta_x: None,
            })
        }
        AnyParams::Rwkv(p) => {
            if d_dim != p.channels {
                return Err(Error::ShapeMismatch("rwkv channel mismatch".into()));
            }
            if let Some(d) = p.w.iter().position(|&w| w <= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "rwkv decay w[{d}] must be positive, got {}",
                    p.w[d]
                )));
            }
            let n = p.state_dim;
            let w = leaf_named(tape, binds, prefix, "w", &p.w, 1, d_dim);
            let w_k = leaf_named(tape, binds, prefix, "w_k", &p.w_k, d_dim, d_dim);
            let w_v = leaf_named(tape, binds, prefix, "w_v", &p.w_v, d_dim, n);
            let w_q = leaf_named(tape, binds, prefix, "w_q", &p.w_q, d_dim, n);

            let klog = tape.linear(x_id, w_k);
            let z = tape.row_add(klog, w);
            let negz = tape.scale(z, -1.0);
            let gate = tape.sigmoid(negz);
            let delta = tape.one_minus(gate);
            let gates = tape.tile_states(gate, n);
            let bshared = tape.linear(x_id, w_v);
            let drive = tape.outer_td(delta, bshared);
            let (states, _) = tape.scan(gates, drive);
            let qproj = tape.linear(x_id, w_q);
            let q_tiled = tape.tile_channels(qproj, d_dim);
            let y = tape.grouped_dot(q_tiled, states, n);
            Ok(LayerForward {
                y,
                delta,
                gates,
                drive,
                states,
                encoded: bshared,
                state_dim: n,
                delta_x: None,
            })
        }
        AnyParams::Griffin(p) => {
            if d_dim != p.channels {
                return Err(Error::ShapeMismatch("griffin channel mismatch".into()));
            }
            let gamma = leaf_named(tape, binds, prefix, "gamma", &p.gamma, 1, d_dim);
            let w_a = leaf_named(tape, binds, prefix, "w_a", &p.w_a, d_dim, d_dim);
            let b_a = leaf_named(tape, binds, prefix, "b_a", &p.b_a, 1, d_dim);
            let w_x = leaf_named(tape, binds, prefix, "w_x", &p.w_x, d_dim, d_dim);
            let b_x = leaf_named(tape, binds, prefix, "b_x", &p.b_x, 1, d_dim);

            let za_lin = tape.linear(x_id, w_a);
            let za = tape.row_add(za_lin, b_a);
            let sa = tape.sigmoid(za);
            let gp = tape.softplus(gamma);
            let gp_t = tape.repeat_rows(gp, t_len);
            let scaled = tape.mul(sa, gp_t);
            let loga = tape.scale(scaled, -p.xi);
            let alpha = tape.exp(loga);

            let asq = tape.mul(alpha, alpha);
            let om = tape.one_minus(asq);
            let delta = tape.sqrt(om);

            let zx_lin = tape.linear(x_id, w_x);
            let zx = tape.row_add(zx_lin, b_x);
            let igate = tape.sigmoid(zx);
            let drive = tape.mul(delta, igate);
            let (states, _) = tape.scan(alpha, drive);
            // c is the identity: the scalar state per channel is the output.
            Ok(LayerForward {
                y: states,
                delta,
                gates: alpha,
                drive,
                states,
                encoded: igate,
                state_dim: 1,
                delta_x: None,
            })
        }
    }
}

/// Tape-free forward: record and discard. Identical arithmetic, so the
/// outputs are bitwise equal to the taped pass by construction.
pub fn layer_outputs(params: &AnyParams, x: &SequenceInput) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let mut binds = Bindings::new();
    let x_id = input_leaf(&mut tape, x);
    let fwd = layer_forward(&mut tape, params, x_id, "", &mut binds)?;
    if let Some(op) = tape.poisoned() {
        return Err(Error::NonFinite { op_index: op });
    }
    Ok(tape.value(fwd.y).data.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{PolarizationConfig, Variant};
    use crate::rng::Rng64;
    use crate::scan::scan_recurrent;

    /// The taped layer and the plain coefficient builders must describe the
    /// same function.
    #[test]
    fn taped_forward_matches_builder_plus_scan() {
        for variant in Variant::ALL {
            let params =
                AnyParams::init(variant, 3, 2, PolarizationConfig::none(), 42).unwrap();
            let mut rng = Rng64::new(7);
            let x = SequenceInput::random(6, 2, &mut rng);
            let y_tape = layer_outputs(&params, &x).unwrap();

            let coeffs = params.build(&x).unwrap();
            for (d, ch) in coeffs.iter().enumerate() {
                let traj = scan_recurrent(ch).unwrap();
                for t in 0..x.t_len() {
                    let yt = traj.output(t + 1);
                    let yl = y_tape[t * x.channels() + d];
                    assert!(
                        (yt - yl).abs() < 1e-12,
                        "{}: channel {d} step {t}: scan {yt} vs tape {yl}",
                        variant.name()
                    );
                }
            }
        }
    }

    #[test]
    fn tape_length_linear_in_t() {
        let params = AnyParams::init(Variant::Mamba, 2, 1, PolarizationConfig::none(), 1).unwrap();
        let mut lens = Vec::new();
        for t_len in [8, 16, 32] {
            let mut rng = Rng64::new(3);
            let x = SequenceInput::random(t_len, 1, &mut rng);
            let mut tape = Tape::new();
            let mut binds = Bindings::new();
            let x_id = input_leaf(&mut tape, &x);
            layer_forward(&mut tape, &params, x_id, "", &mut binds).unwrap();
            lens.push(tape.len());
        }
        // One record per recurrence step plus a constant overhead.
        let d1 = lens[1] - lens[0];
        let d2 = lens[2] - lens[1];
        assert_eq!(d1, 8);
        assert_eq!(d2, 16);
    }
}
