//! The trainable stack: token embedding, residual blocks (RMS pre-norm,
//! optional depthwise causal conv, mixer, sigmoid gate), and a linear
//! classifier head. Everything runs through the gradient tape.

use crate::error::Error;
use crate::grad::{layer_forward, Bindings, LayerForward, Tape, ValId};
use crate::params::{AnyParams, PolarizationConfig, Variant};
use crate::rng::Rng64;
use crate::tasks::data::ARExample;
use crate::Result;
use serde::{Deserialize, Serialize};

pub const CONV_KERNEL: usize = 4;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab: usize,
    pub dim: usize,
    pub state_dim: usize,
    pub layers: usize,
    pub variant: Variant,
    pub polarization: PolarizationConfig,
    pub conv: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn desk_default() -> Self {
        ModelConfig {
            vocab: 64,
            dim: 64,
            state_dim: 16,
            layers: 2,
            variant: Variant::Mamba,
            polarization: PolarizationConfig::none(),
            conv: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub rms_gain: Vec<f64>,
    pub conv_w: Option<Vec<f64>>,
    pub mixer: AnyParams,
    pub gate_w: Vec<f64>,
    pub gate_b: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TinyModel {
    pub config: ModelConfig,
    pub embed: Vec<f64>,
    pub blocks: Vec<Block>,
    pub classifier: Vec<f64>,
}

/// Intermediate value handles of one block, for layerwise probes.
pub struct BlockTrace {
    /// T×D sequence fed to the mixer (post-norm, post-conv).
    pub mixer_input: ValId,
    pub mixer: LayerForward,
    pub block_out: ValId,
}

/// One recorded forward pass over a token sequence.
pub struct ModelRun {
    pub tape: Tape,
    pub logits: ValId,
    pub binds: Bindings,
    pub traces: Vec<BlockTrace>,
}

impl TinyModel {
    pub fn init(config: ModelConfig) -> Result<TinyModel> {
        let mut rng = Rng64::new(config.seed);
        let d = config.dim;
        let scale = 1.0 / (d as f64).sqrt();
        let mut embed = vec![0.0; config.vocab * d];
        rng.fill_uniform(&mut embed, scale);
        let mut classifier = vec![0.0; d * config.vocab];
        rng.fill_uniform(&mut classifier, scale);
        let mut blocks = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let mixer = AnyParams::init(
                config.variant,
                config.state_dim,
                d,
                config.polarization,
                rng.next_u64(),
            )?;
            let conv_w = if config.conv {
                let mut w = vec![0.0; d * CONV_KERNEL];
                rng.fill_uniform(&mut w, 1.0 / (CONV_KERNEL as f64).sqrt());
                Some(w)
            } else {
                None
            };
            let mut gate_w = vec![0.0; d * d];
            rng.fill_uniform(&mut gate_w, scale);
            blocks.push(Block {
                rms_gain: vec![1.0; d],
                conv_w,
                mixer,
                gate_w,
                gate_b: vec![0.0; d],
            });
        }
        Ok(TinyModel {
            config,
            embed,
            blocks,
            classifier,
        })
    }

    pub fn forward_with_tape(&self, ids: &[u32]) -> Result<ModelRun> {
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.config.vocab) {
            return Err(Error::ShapeMismatch(format!(
                "token id {bad} out of vocab range {}",
                self.config.vocab
            )));
        }
        let d = self.config.dim;
        let mut tape = Tape::new();
        let mut binds = Bindings::new();
        let embed = tape.leaf(self.embed.clone(), self.config.vocab, d, true);
        binds.bind("embed", embed);
        let idx: Vec<usize> = ids.iter().map(|&t| t as usize).collect();
        let mut x = tape.gather(embed, &idx);

        let mut traces = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate() {
            let gain = tape.leaf(block.rms_gain.clone(), 1, d, true);
            binds.bind(format!("block{i}.rms_gain"), gain);
            let u = tape.rms_norm(x, gain);
            let mixer_input = match &block.conv_w {
                Some(w) => {
                    let wid = tape.leaf(w.clone(), d, CONV_KERNEL, true);
                    binds.bind(format!("block{i}.conv_w"), wid);
                    tape.causal_conv(u, wid)
                }
                None => u,
            };
            let mixer = layer_forward(
                &mut tape,
                &block.mixer,
                mixer_input,
                &format!("block{i}.mixer."),
                &mut binds,
            )?;
            let gw = tape.leaf(block.gate_w.clone(), d, d, true);
            binds.bind(format!("block{i}.gate_w"), gw);
            let gb = tape.leaf(block.gate_b.clone(), 1, d, true);
            binds.bind(format!("block{i}.gate_b"), gb);
            let glin = tape.linear(u, gw);
            let gz = tape.row_add(glin, gb);
            let gate = tape.sigmoid(gz);
            let gated = tape.mul(mixer.y, gate);
            let out = tape.add(x, gated);
            traces.push(BlockTrace {
                mixer_input,
                mixer,
                block_out: out,
            });
            x = out;
        }
        let clf = tape.leaf(self.classifier.clone(), d, self.config.vocab, true);
        binds.bind("classifier", clf);
        let logits = tape.linear(x, clf);
        if let Some(op) = tape.poisoned() {
            return Err(Error::NonFinite { op_index: op });
        }
        Ok(ModelRun {
            tape,
            logits,
            binds,
            traces,
        })
    }

    /// Tape-free logits (records and discards: identical arithmetic).
    pub fn logits(&self, ids: &[u32]) -> Result<Vec<f64>> {
        let run = self.forward_with_tape(ids)?;
        Ok(run.tape.value(run.logits).data.clone())
    }

    /// Forward plus the masked loss op; returns the run and the loss id.
    pub fn loss_with_tape(&self, ex: &ARExample) -> Result<(ModelRun, ValId)> {
        let mut run = self.forward_with_tape(&ex.input)?;
        let loss = run
            .tape
            .masked_cross_entropy(run.logits, &ex.target, &ex.mask)?;
        if let Some(op) = run.tape.poisoned() {
            return Err(Error::NonFinite { op_index: op });
        }
        Ok((run, loss))
    }

    /// Named views of every trainable tensor, in a stable order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![("embed".into(), self.embed.as_slice())];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.rms_gain"), b.rms_gain.as_slice()));
            if let Some(w) = &b.conv_w {
                out.push((format!("block{i}.conv_w"), w.as_slice()));
            }
            for (name, t) in b.mixer.tensors() {
                out.push((format!("block{i}.mixer.{name}"), t));
            }
            out.push((format!("block{i}.gate_w"), b.gate_w.as_slice()));
            out.push((format!("block{i}.gate_b"), b.gate_b.as_slice()));
        }
        out.push(("classifier".into(), self.classifier.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> =
            vec![("embed".into(), self.embed.as_mut_slice())];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("block{i}.rms_gain"), b.rms_gain.as_mut_slice()));
            if let Some(w) = &mut b.conv_w {
                out.push((format!("block{i}.conv_w"), w.as_mut_slice()));
            }
            for (name, t) in b.mixer.tensors_mut() {
                out.push((format!("block{i}.mixer.{name}"), t));
            }
            out.push((format!("block{i}.gate_w"), b.gate_w.as_mut_slice()));
            out.push((format!("block{i}.gate_b"), b.gate_b.as_mut_slice()));
        }
        out.push(("classifier".into(), self.classifier.as_mut_slice()));
        out
    }

    /// Frozen scalar indices of a named tensor (the pinned gate entries).
    pub fn frozen_indices(&self, name: &str) -> Vec<usize> {
        for (i, b) in self.blocks.iter().enumerate() {
            let prefix = format!("block{i}.mixer.");
            if let Some(rest) = name.strip_prefix(&prefix) {
                return b.mixer.frozen_indices(rest);
            }
        }
        Vec::new()
    }
}
