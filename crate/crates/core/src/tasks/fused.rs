//! Hand-fused forward/backward for the selective-mixer model, the training
//! fast path. One preallocated workspace per thread, no allocation in the
//! steady state. The gradient tape remains the reference implementation;
//! this path is held to it at 1e-12 relative in tests.
//!
//! Derivative bookkeeping worth noting:
//! - softplus' is recovered from its own output: σ(z) = 1 − e^{−softplus(z)},
//!   so the pre-activation is never stored.
//! - the drive Δ_t·x_t·b_t is recomputed rowwise in the backward sweep
//!   instead of stored.
//! - the state adjoint walks one T×(D·N) buffer in place:
//!   ĥ_{t-1} += a_t ⊙ ĥ_t after harvesting a_t's and the drive's terms.

use crate::error::Error;
use crate::params::{sigmoid, AnyParams, MambaParams};
use crate::tasks::data::ARExample;
use crate::tasks::model::{TinyModel, CONV_KERNEL};
use crate::Result;

const RMS_EPS: f64 = 1e-8;

/// Scratch buffers for one example pass, reused across examples.
#[derive(Default)]
pub struct Workspace {
    // per layer saves (concatenated by layer index)
    x_in: Vec<Vec<f64>>,   // block inputs, T×D
    u: Vec<Vec<f64>>,      // normed, T×D
    inv_rms: Vec<Vec<f64>>, // T
    v: Vec<Vec<f64>>,      // post-conv mixer input, T×D
    delta: Vec<Vec<f64>>,  // T×D
    bproj: Vec<Vec<f64>>,  // T×N
    cproj: Vec<Vec<f64>>,  // T×N
    gates: Vec<Vec<f64>>,  // T×D×N
    states: Vec<Vec<f64>>, // T×D×N
    mix_y: Vec<Vec<f64>>,  // T×D
    gate: Vec<Vec<f64>>,   // T×D
    x_out: Vec<f64>,       // final layer output, T×D
    pub logits: Vec<f64>,  // T×V
    probs: Vec<f64>,       // T×V
    // backward scratch
    grad_x: Vec<f64>,   // T×D
    grad_u: Vec<f64>,   // T×D
    grad_v: Vec<f64>,   // T×D
    grad_h: Vec<f64>,   // T×D×N
    grad_b: Vec<f64>,   // T×N
    grad_c: Vec<f64>,   // T×N
    grad_delta: Vec<f64>, // T×D
    grad_logits: Vec<f64>, // T×V
}

fn fit(buf: &mut Vec<f64>, len: usize) -> &mut [f64] {
    buf.clear();
    buf.resize(len, 0.0);
    buf
}

/// Size without zeroing, for buffers every pass fully overwrites.
fn fit_any(buf: &mut Vec<f64>, len: usize) {
    if buf.len() != len {
        buf.resize(len, 0.0);
    }
}

fn fit_layers(bufs: &mut Vec<Vec<f64>>, layers: usize, len: usize, zero: bool) {
    bufs.resize_with(layers, Vec::new);
    for b in bufs.iter_mut() {
        if zero {
            b.clear();
            b.resize(len, 0.0);
        } else {
            fit_any(b, len);
        }
    }
}

/// True when the fast path covers this model (selective mixer).
pub fn supports(model: &TinyModel) -> bool {
    model
        .blocks
        .iter()
        .all(|b| matches!(b.mixer, AnyParams::Mamba(_)))
}

fn mixer(block: &crate::tasks::model::Block) -> &MambaParams {
    match &block.mixer {
        AnyParams::Mamba(m) => m,
        _ => unreachable!("fused path guarded by supports()"),
    }
}

/// x·W for row-major W (in_dim × out_dim), accumulating into out. The inner
/// loop is a pure elementwise AXPY over contiguous rows so it vectorizes.
fn matmul_acc(x: &[f64], w: &[f64], t_len: usize, d_in: usize, d_out: usize, out: &mut [f64]) {
    for t in 0..t_len {
        let xrow = &x[t * d_in..(t + 1) * d_in];
        let orow = &mut out[t * d_out..(t + 1) * d_out];
        for (i, &xv) in xrow.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[i * d_out..(i + 1) * d_out];
            for (ov, &wv) in orow.iter_mut().zip(wrow) {
                *ov += xv * wv;
            }
        }
    }
}

/// grad_w += xᵀ·gy and gx += gy·Wᵀ, as two separately vectorizable passes.
fn matmul_bwd(
    x: &[f64],
    w: &[f64],
    gy: &[f64],
    t_len: usize,
    d_in: usize,
    d_out: usize,
    gx: &mut [f64],
    gw: &mut [f64],
) {
    for t in 0..t_len {
        let xrow = &x[t * d_in..(t + 1) * d_in];
        let grow = &gy[t * d_out..(t + 1) * d_out];
        let gxrow = &mut gx[t * d_in..(t + 1) * d_in];
        for i in 0..d_in {
            let wrow = &w[i * d_out..(i + 1) * d_out];
            let mut acc = 0.0;
            for (&g, &wv) in grow.iter().zip(wrow) {
                acc += g * wv;
            }
            gxrow[i] += acc;
            let xv = xrow[i];
            if xv == 0.0 {
                continue;
            }
            let gwrow = &mut gw[i * d_out..(i + 1) * d_out];
            for (gwv, &g) in gwrow.iter_mut().zip(grow) {
                *gwv += xv * g;
            }
        }
    }
}

pub struct PassStats {
    pub loss: f64,
    pub correct: usize,
    pub masked: usize,
}

/// Forward only: logits into ws.logits. Mirrors the tape program exactly.
pub fn forward(model: &TinyModel, ids: &[u32], ws: &mut Workspace) -> Result<()> {
    let d = model.config.dim;
    let vocab = model.config.vocab;
    let t_len = ids.len();
    let layers = model.blocks.len();
    let n = model.config.state_dim;
    let dn = d * n;

    fit_layers(&mut ws.x_in, layers, t_len * d, false);
    fit_layers(&mut ws.u, layers, t_len * d, false);
    fit_layers(&mut ws.inv_rms, layers, t_len, false);
    fit_layers(&mut ws.v, layers, t_len * d, false);
    fit_layers(&mut ws.delta, layers, t_len * d, false);
    fit_layers(&mut ws.bproj, layers, t_len * n, true);
    fit_layers(&mut ws.cproj, layers, t_len * n, true);
    fit_layers(&mut ws.gates, layers, t_len * dn, false);
    fit_layers(&mut ws.states, layers, t_len * dn, false);
    fit_layers(&mut ws.mix_y, layers, t_len * d, false);
    fit_layers(&mut ws.gate, layers, t_len * d, false);

    // embedding
    {
        let x0 = &mut ws.x_in[0];
        for (t, &id) in ids.iter().enumerate() {
            let id = id as usize;
            if id >= vocab {
                return Err(Error::ShapeMismatch(format!(
                    "token id {id} out of vocab range {vocab}"
                )));
            }
            x0[t * d..(t + 1) * d].copy_from_slice(&model.embed[id * d..(id + 1) * d]);
        }
    }

    for l in 0..layers {
        let block = &model.blocks[l];
        let p = mixer(block);
        // rms norm
        for t in 0..t_len {
            let xrow = &ws.x_in[l][t * d..(t + 1) * d];
            let ms = xrow.iter().map(|v| v * v).sum::<f64>() / d as f64;
            let s = 1.0 / (ms + RMS_EPS).sqrt();
            ws.inv_rms[l][t] = s;
            let urow = &mut ws.u[l][t * d..(t + 1) * d];
            for c in 0..d {
                urow[c] = xrow[c] * s * block.rms_gain[c];
            }
        }
        // conv
        match &block.conv_w {
            Some(w) => {
                for t in 0..t_len {
                    let vrow = &mut ws.v[l][t * d..(t + 1) * d];
                    for dd in 0..d {
                        let mut acc = 0.0;
                        for k in 0..CONV_KERNEL.min(t + 1) {
                            acc += w[dd * CONV_KERNEL + k] * ws.u[l][(t - k) * d + dd];
                        }
                        vrow[dd] = acc;
                    }
                }
            }
            None => ws.v[l].copy_from_slice(&ws.u[l]),
        }
        // delta / projections
        {
            let delta = &mut ws.delta[l];
            for t in 0..t_len {
                let drow = &mut delta[t * d..(t + 1) * d];
                drow.copy_from_slice(&p.delta_bias);
            }
            matmul_acc(&ws.v[l], &p.w_delta, t_len, d, d, delta);
            for z in delta.iter_mut() {
                *z = crate::params::softplus(*z);
            }
            matmul_acc(&ws.v[l], &p.w_b, t_len, d, n, &mut ws.bproj[l]);
            matmul_acc(&ws.v[l], &p.w_c, t_len, d, n, &mut ws.cproj[l]);
        }
        // gates, drive, scan, decode
        {
            let gates = &mut ws.gates[l];
            let states = &mut ws.states[l];
            for t in 0..t_len {
                for dd in 0..d {
                    let dt = ws.delta[l][t * d + dd];
                    let xv = ws.v[l][t * d + dd];
                    let db = dt * xv;
                    let arow = &p.a_diag[dd * n..(dd + 1) * n];
                    let base = t * dn + dd * n;
                    for j in 0..n {
                        let g = (dt * arow[j]).exp();
                        gates[base + j] = g;
                        let drive = db * ws.bproj[l][t * n + j];
                        states[base + j] = if t == 0 {
                            drive
                        } else {
                            g * states[base - dn + j] + drive
                        };
                    }
                }
                for dd in 0..d {
                    let base = t * dn + dd * n;
                    let mut y = 0.0;
                    for j in 0..n {
                        y += ws.cproj[l][t * n + j] * states[base + j];
                    }
                    ws.mix_y[l][t * d + dd] = y;
                }
            }
        }
        // gate and residual
        {
            let gate = &mut ws.gate[l];
            for t in 0..t_len {
                gate[t * d..(t + 1) * d].copy_from_slice(&block.gate_b);
            }
            matmul_acc(&ws.u[l], &block.gate_w, t_len, d, d, gate);
            for g in gate.iter_mut() {
                *g = sigmoid(*g);
            }
            let (head, tail) = ws.x_in.split_at_mut(l + 1);
            let x_l = &head[l];
            let next: &mut Vec<f64> = if l + 1 < layers {
                &mut tail[0]
            } else {
                fit_any(&mut ws.x_out, t_len * d);
                &mut ws.x_out
            };
            for i in 0..t_len * d {
                next[i] = x_l[i] + ws.mix_y[l][i] * gate[i];
            }
        }
    }

    // classifier
    fit(&mut ws.logits, t_len * vocab);
    // (zeroed: the classifier matmul accumulates)
    let last = if layers == 0 { &ws.x_in[0] } else { &ws.x_out };
    matmul_acc(last, &model.classifier, t_len, d, vocab, &mut ws.logits);
    Ok(())
}

/// Forward, masked loss, full backward. Gradients accumulate (+=) into
/// `grads`, which must align with `model.tensors()` order.
pub fn loss_and_grad(
    model: &TinyModel,
    ex: &ARExample,
    ws: &mut Workspace,
    grads: &mut [Vec<f64>],
) -> Result<PassStats> {
    forward(model, &ex.input, ws)?;
    let d = model.config.dim;
    let vocab = model.config.vocab;
    let n = model.config.state_dim;
    let dn = d * n;
    let t_len = ex.input.len();
    let layers = model.blocks.len();

    // softmax + masked NLL + accuracy
    fit_any(&mut ws.probs, t_len * vocab);
    let count = ex.mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for t in 0..t_len {
        let row = &ws.logits[t * vocab..(t + 1) * vocab];
        let maxv = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for c in 0..vocab {
            let e = (row[c] - maxv).exp();
            ws.probs[t * vocab + c] = e;
            z += e;
        }
        let inv = 1.0 / z;
        for c in 0..vocab {
            ws.probs[t * vocab + c] *= inv;
        }
        if ex.mask[t] {
            loss -= ws.probs[t * vocab + ex.target[t] as usize].ln();
            let mut best = 0usize;
            for c in 1..vocab {
                if row[c] > row[best] {
                    best = c;
                }
            }
            if best as u32 == ex.target[t] {
                correct += 1;
            }
        }
    }
    loss /= count as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite { op_index: 0 });
    }

    // tensor index map (stable order, see TinyModel::tensors)
    let mut gi = 0usize;
    let g_embed = gi;
    gi += 1;
    let mut g_blocks = Vec::with_capacity(layers);
    for l in 0..layers {
        let has_conv = model.blocks[l].conv_w.is_some();
        let rms = gi;
        gi += 1;
        let conv = if has_conv {
            let c = gi;
            gi += 1;
            Some(c)
        } else {
            None
        };
        let a_diag = gi;
        let w_delta = gi + 1;
        let d_bias = gi + 2;
        let w_b = gi + 3;
        let w_c = gi + 4;
        gi += 5;
        let gate_w = gi;
        let gate_b = gi + 1;
        gi += 2;
        g_blocks.push((rms, conv, a_diag, w_delta, d_bias, w_b, w_c, gate_w, gate_b));
    }
    let g_clf = gi;

    // CE backward
    fit(&mut ws.grad_logits, t_len * vocab);
    let scale = 1.0 / count as f64;
    for t in 0..t_len {
        if !ex.mask[t] {
            continue;
        }
        let tgt = ex.target[t] as usize;
        let row = &mut ws.grad_logits[t * vocab..(t + 1) * vocab];
        for c in 0..vocab {
            row[c] = scale * (ws.probs[t * vocab + c] - if c == tgt { 1.0 } else { 0.0 });
        }
    }

    // classifier backward
    fit(&mut ws.grad_x, t_len * d);
    let last = if layers == 0 { &ws.x_in[0] } else { &ws.x_out };
    matmul_bwd(
        last,
        &model.classifier,
        &ws.grad_logits,
        t_len,
        d,
        vocab,
        &mut ws.grad_x,
        &mut grads[g_clf],
    );

    for l in (0..layers).rev() {
        let block = &model.blocks[l];
        let p = mixer(block);
        let (rms_i, conv_i, a_i, wd_i, db_i, wb_i, wc_i, gw_i, gb_i) = g_blocks[l];

        // residual: grad_x carries ĝ(out); split into x̂ (pass-through) and
        // the gated mixer branch.
        fit(&mut ws.grad_u, t_len * d);
        fit(&mut ws.grad_v, t_len * d);
        fit(&mut ws.grad_delta, t_len * d);
        fit(&mut ws.grad_b, t_len * n);
        fit(&mut ws.grad_c, t_len * n);
        // gate branch: ĝgate = ĝout·y, ŷ = ĝout·gate
        {
            // ẑ = ĝgate·g(1−g); accumulate gate weight grads and û.
            // Reuse grad_v as ẑ scratch first (it is zeroed), then move on.
            let gz = &mut ws.grad_v;
            for i in 0..t_len * d {
                let g = ws.gate[l][i];
                gz[i] = ws.grad_x[i] * ws.mix_y[l][i] * g * (1.0 - g);
            }
            matmul_bwd(
                &ws.u[l],
                &block.gate_w,
                gz,
                t_len,
                d,
                d,
                &mut ws.grad_u,
                &mut grads[gw_i],
            );
            let gb = &mut grads[gb_i];
            for t in 0..t_len {
                for c in 0..d {
                    gb[c] += gz[t * d + c];
                }
            }
            gz.iter_mut().for_each(|v| *v = 0.0);
        }

        // decode backward: ĥ = ŷ ⊗ cproj, ĉproj = Σ_d ŷ·h
        fit(&mut ws.grad_h, t_len * dn);
        for t in 0..t_len {
            for dd in 0..d {
                let gy = ws.grad_x[t * d + dd] * ws.gate[l][t * d + dd];
                if gy == 0.0 {
                    continue;
                }
                let base = t * dn + dd * n;
                for j in 0..n {
                    ws.grad_h[base + j] = gy * ws.cproj[l][t * n + j];
                    ws.grad_c[t * n + j] += gy * ws.states[l][base + j];
                }
            }
        }

        // scan backward, walking grad_h in place from the last step.
        {
            let gates = &ws.gates[l];
            let states = &ws.states[l];
            for t in (0..t_len).rev() {
                for dd in 0..d {
                    let dt = ws.delta[l][t * d + dd];
                    let xv = ws.v[l][t * d + dd];
                    let db = dt * xv;
                    let arow = &p.a_diag[dd * n..(dd + 1) * n];
                    let base = t * dn + dd * n;
                    let mut gdelta = 0.0;
                    let mut gv = 0.0;
                    let ga_row = &mut grads[a_i][dd * n..(dd + 1) * n];
                    for j in 0..n {
                        let gh = ws.grad_h[base + j];
                        if t > 0 {
                            let hprev = states[base - dn + j];
                            let g = gates[base + j];
                            // gate term: ∂gate/∂Δ = gate·A, ∂gate/∂A = gate·Δ
                            let ggate = gh * hprev;
                            gdelta += ggate * g * arow[j];
                            ga_row[j] += ggate * g * dt;
                            ws.grad_h[base - dn + j] += g * gh;
                        }
                        // drive term: drive = Δ·x·bproj
                        let bj = ws.bproj[l][t * n + j];
                        gdelta += gh * xv * bj;
                        gv += gh * dt * bj;
                        ws.grad_b[t * n + j] += gh * db;
                    }
                    ws.grad_delta[t * d + dd] += gdelta;
                    ws.grad_v[t * d + dd] += gv;
                }
            }
        }

        // softplus backward: σ(z) = 1 − e^{−Δ}
        for i in 0..t_len * d {
            ws.grad_delta[i] *= 1.0 - (-ws.delta[l][i]).exp();
        }
        // delta / projection weight grads and v̂ accumulation
        matmul_bwd(
            &ws.v[l],
            &p.w_delta,
            &ws.grad_delta,
            t_len,
            d,
            d,
            &mut ws.grad_v,
            &mut grads[wd_i],
        );
        {
            let gdb = &mut grads[db_i];
            for t in 0..t_len {
                for c in 0..d {
                    gdb[c] += ws.grad_delta[t * d + c];
                }
            }
        }
        matmul_bwd(
            &ws.v[l],
            &p.w_b,
            &ws.grad_b,
            t_len,
            d,
            n,
            &mut ws.grad_v,
            &mut grads[wb_i],
        );
        matmul_bwd(
            &ws.v[l],
            &p.w_c,
            &ws.grad_c,
            t_len,
            d,
            n,
            &mut ws.grad_v,
            &mut grads[wc_i],
        );

        // conv backward into grad_u
        match (&block.conv_w, conv_i) {
            (Some(w), Some(ci)) => {
                let gw = &mut grads[ci];
                for t in 0..t_len {
                    for dd in 0..d {
                        let gv = ws.grad_v[t * d + dd];
                        if gv == 0.0 {
                            continue;
                        }
                        for k in 0..CONV_KERNEL.min(t + 1) {
                            ws.grad_u[(t - k) * d + dd] += gv * w[dd * CONV_KERNEL + k];
                            gw[dd * CONV_KERNEL + k] += gv * ws.u[l][(t - k) * d + dd];
                        }
                    }
                }
            }
            _ => {
                for i in 0..t_len * d {
                    ws.grad_u[i] += ws.grad_v[i];
                }
            }
        }

        // rms backward: grad_x(l) = residual pass-through + norm backward
        {
            let ggain = &mut grads[rms_i];
            for t in 0..t_len {
                let s = ws.inv_rms[l][t];
                let xrow = &ws.x_in[l][t * d..(t + 1) * d];
                let gurow = &ws.grad_u[t * d..(t + 1) * d];
                let mut dot = 0.0;
                for c in 0..d {
                    let gyc = gurow[c] * block.rms_gain[c];
                    ggain[c] += gurow[c] * xrow[c] * s;
                    dot += gyc * xrow[c];
                }
                let corr = s * s * s * dot / d as f64;
                let gxrow = &mut ws.grad_x[t * d..(t + 1) * d];
                for c in 0..d {
                    gxrow[c] += s * gurow[c] * block.rms_gain[c] - corr * xrow[c];
                }
            }
        }
    }

    // embedding scatter
    {
        let ge = &mut grads[g_embed];
        for (t, &id) in ex.input.iter().enumerate() {
            let id = id as usize;
            for c in 0..d {
                ge[id * d + c] += ws.grad_x[t * d + c];
            }
        }
    }

    Ok(PassStats {
        loss,
        correct,
        masked: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{PolarizationConfig, Variant};
    use crate::rng::Rng64;
    use crate::tasks::data::{generate_example, ARExample};
    use crate::tasks::model::ModelConfig;

    fn random_example(vocab: usize, len: usize, pairs: usize, seed: u64) -> ARExample {
        let mut rng = Rng64::new(seed);
        generate_example(vocab, len, pairs, 1.0, &mut rng).unwrap()
    }

    #[test]
    fn fused_matches_tape_forward_and_gradients() {
        for (layers, conv, polar) in [
            (1usize, true, PolarizationConfig::none()),
            (2, false, PolarizationConfig::none()),
            (2, true, PolarizationConfig::both()),
        ] {
            let model = TinyModel::init(ModelConfig {
                vocab: 16,
                dim: 6,
                state_dim: 4,
                layers,
                variant: Variant::Mamba,
                polarization: polar,
                conv,
                seed: 31 + layers as u64,
            })
            .unwrap();
            let ex = random_example(16, 14, 3, 77);
            let mut ws = Workspace::default();
            let sizes: Vec<usize> = model.tensors().iter().map(|(_, t)| t.len()).collect();
            let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
            let stats = loss_and_grad(&model, &ex, &mut ws, &mut grads).unwrap();

            // reference: tape
            let (run, loss_id) = model.loss_with_tape(&ex).unwrap();
            let ref_loss = run.tape.value(loss_id).data[0];
            let adj = run.tape.backward(loss_id, &[1.0]).unwrap();
            assert!(
                (stats.loss - ref_loss).abs() <= 1e-12 * ref_loss.abs().max(1.0),
                "loss {} vs {}",
                stats.loss,
                ref_loss
            );
            for (ti, (name, _)) in model.tensors().iter().enumerate() {
                let id = run.binds.lookup(name).unwrap();
                let reference = adj.get(id, sizes[ti]);
                for (j, (&a, &b)) in grads[ti].iter().zip(&reference).enumerate() {
                    let tol = 1e-12 * a.abs().max(b.abs()).max(1e-6);
                    assert!(
                        (a - b).abs() <= tol,
                        "layers={layers} conv={conv} {name}[{j}]: fused {a} vs tape {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn fused_forward_matches_tape_logits() {
        let model = TinyModel::init(ModelConfig {
            vocab: 16,
            dim: 8,
            state_dim: 3,
            layers: 2,
            variant: Variant::Mamba,
            polarization: PolarizationConfig::none(),
            conv: true,
            seed: 5,
        })
        .unwrap();
        let ids = vec![1u32, 9, 3, 14, 2, 8];
        let mut ws = Workspace::default();
        forward(&model, &ids, &mut ws).unwrap();
        let tape_logits = model.logits(&ids).unwrap();
        for (a, b) in ws.logits.iter().zip(&tape_logits) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn workspace_reuse_is_clean() {
        let model = TinyModel::init(ModelConfig {
            vocab: 16,
            dim: 6,
            state_dim: 3,
            layers: 2,
            variant: Variant::Mamba,
            polarization: PolarizationConfig::none(),
            conv: true,
            seed: 8,
        })
        .unwrap();
        let mut ws = Workspace::default();
        let sizes: Vec<usize> = model.tensors().iter().map(|(_, t)| t.len()).collect();
        let ex1 = random_example(16, 14, 3, 1);
        let ex2 = random_example(16, 10, 2, 2); // shorter: buffers shrink
        let mut g1: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
        let s1 = loss_and_grad(&model, &ex1, &mut ws, &mut g1).unwrap();
        let mut g2: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
        loss_and_grad(&model, &ex2, &mut ws, &mut g2).unwrap();
        let mut g3: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
        let s3 = loss_and_grad(&model, &ex1, &mut ws, &mut g3).unwrap();
        assert_eq!(s1.loss, s3.loss, "workspace reuse must not leak state");
        for (a, b) in g1.iter().zip(&g3) {
            assert_eq!(a, b);
        }
    }
}
