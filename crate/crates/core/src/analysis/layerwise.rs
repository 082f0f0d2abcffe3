//! Layer-by-layer sharpness probes through a trained or random stack: ε of
//! the encoded tokens, states, mixer outputs, and block outputs, plus the
//! per-layer state-gap bound on the mixer's own coefficients.

use super::bound::{oversmoothing_check_multi, BoundReport};
use super::smoothness::smoothness;
use crate::coeffs::SequenceInput;
use crate::tasks::model::TinyModel;
use crate::Result;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct LayerProbe {
    pub layer: usize,
    /// ε of the encoded tokens b_t feeding the scan.
    pub encoded: f64,
    /// ε of the memory states h_t.
    pub states: f64,
    /// ε of the mixer outputs y_t.
    pub mixer_out: f64,
    /// ε of the full block outputs (residual included).
    pub block_out: f64,
    pub bound: BoundReport,
}

/// Run the model once and probe every layer. ε values of an all-zero probe
/// are reported as 0 rather than failing the whole sweep.
pub fn layerwise_smoothness(model: &TinyModel, ids: &[u32]) -> Result<Vec<LayerProbe>> {
    let run = model.forward_with_tape(ids)?;
    let eps = |data: &[f64], rows: usize, cols: usize| -> f64 {
        smoothness(data, rows, cols).unwrap_or(0.0)
    };
    let mut probes = Vec::with_capacity(run.traces.len());
    for (i, trace) in run.traces.iter().enumerate() {
        let enc = run.tape.value(trace.mixer.encoded);
        let st = run.tape.value(trace.mixer.states);
        let my = run.tape.value(trace.mixer.y);
        let bo = run.tape.value(trace.block_out);

        // Rebuild the mixer coefficients on the actual mixer input for the
        // bound check.
        let min = run.tape.value(trace.mixer_input);
        let x = SequenceInput::new(min.data.clone(), min.rows, min.cols)?;
        let coeffs = model.blocks[i].mixer.build(&x)?;
        let bound = oversmoothing_check_multi(&coeffs)?;

        probes.push(LayerProbe {
            layer: i,
            encoded: eps(&enc.data, enc.rows, enc.cols),
            states: eps(&st.data, st.rows, st.cols),
            mixer_out: eps(&my.data, my.rows, my.cols),
            block_out: eps(&bo.data, bo.rows, bo.cols),
            bound,
        });
    }
    Ok(probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{PolarizationConfig, Variant};
    use crate::tasks::model::ModelConfig;

    fn stack(variant: Variant, layers: usize, seed: u64) -> TinyModel {
        TinyModel::init(ModelConfig {
            vocab: 16,
            dim: 8,
            state_dim: 4,
            layers,
            variant,
            polarization: PolarizationConfig::none(),
            conv: false,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn constant_tokens_have_zero_encoded_sharpness() {
        let model = stack(Variant::Mamba, 1, 3);
        let probes = layerwise_smoothness(&model, &[5, 5, 5, 5, 5, 5]).unwrap();
        // Identical tokens → identical encodings; the state probe keeps the
        // recurrence transient (h ramps from 0) and is not asserted here.
        assert!(probes[0].encoded.abs() < 1e-12);
    }

    #[test]
    fn conservative_gate_stack_respects_the_bound_per_layer() {
        // The normalized two-way gate satisfies a + Δ = 1 identically, so
        // every layer's bound must hold with no further assumptions.
        let model = stack(Variant::Rwkv, 4, 9);
        let probes = layerwise_smoothness(&model, &[1, 7, 3, 11, 2, 9, 4, 13]).unwrap();
        assert_eq!(probes.len(), 4);
        for p in &probes {
            assert!(p.bound.condition_equals_one, "layer {}", p.layer);
            assert_eq!(p.bound.satisfied, Some(true), "layer {}", p.layer);
        }
    }
}
