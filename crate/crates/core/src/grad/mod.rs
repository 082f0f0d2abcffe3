//! Reverse-mode differentiation through coefficient construction and the
//! scan, plus the central-difference oracle used to check it.

pub mod check;
pub mod fd;
pub mod layer;
pub mod tape;

pub use check::{
    check_polarized_delta_gradient, gradient_check_layer, GradCheckRecord, PolarizedDeltaReport,
};
pub use layer::{input_leaf, layer_forward, layer_outputs, Bindings, LayerForward};
pub use tape::{Adjoints, Buffer, Tape, ValId};

use crate::coeffs::SequenceInput;
use crate::error::Error;
use crate::params::AnyParams;
use crate::Result;

/// Gradients keyed by tensor name, plus the input gradient.
#[derive(Clone, Debug, Default)]
pub struct GradientSet {
    /// ∂ℓ/∂x, T×D flat (empty for token-id models).
    pub input: Vec<f64>,
    pub tensors: Vec<(String, Vec<f64>)>,
}

impl GradientSet {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, g)| g.as_slice())
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        if self.input.len() == other.input.len() {
            for (a, b) in self.input.iter_mut().zip(&other.input) {
                *a += b;
            }
        }
        for ((_, a), (_, b)) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in self.input.iter_mut() {
            *v *= k;
        }
        for (_, t) in self.tensors.iter_mut() {
            for v in t.iter_mut() {
                *v *= k;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let mut acc: f64 = self.input.iter().map(|v| v * v).sum();
        for (_, t) in &self.tensors {
            acc += t.iter().map(|v| v * v).sum::<f64>();
        }
        acc.sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.input.iter().all(|v| v.is_finite())
            && self
                .tensors
                .iter()
                .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// One recorded forward pass of a mixer layer.
pub struct LayerRun {
    pub tape: Tape,
    pub x_id: ValId,
    pub fwd: LayerForward,
    pub binds: Bindings,
}

impl LayerRun {
    pub fn outputs(&self) -> &[f64] {
        &self.tape.value(self.fwd.y).data
    }
}

/// Record the full selective computation for one layer on one input.
/// Outputs are bitwise identical to `layer_outputs` (same code path).
pub fn forward_with_tape(params: &AnyParams, x: &SequenceInput) -> Result<LayerRun> {
    let mut tape = Tape::new();
    let mut binds = Bindings::new();
    let x_id = input_leaf(&mut tape, x);
    let fwd = layer_forward(&mut tape, params, x_id, "", &mut binds)?;
    if let Some(op) = tape.poisoned() {
        return Err(Error::NonFinite { op_index: op });
    }
    Ok(LayerRun {
        tape,
        x_id,
        fwd,
        binds,
    })
}

/// Exact reverse-mode gradients of ⟨cotangent, outputs⟩ with respect to the
/// input and every parameter tensor.
pub fn backward(run: &LayerRun, cotangent: &[f64]) -> Result<GradientSet> {
    let adj = run.tape.backward(run.fwd.y, cotangent)?;
    let input_len = run.tape.value(run.x_id).len();
    let mut set = GradientSet {
        input: adj.get(run.x_id, input_len),
        tensors: Vec::new(),
    };
    for (name, id) in run.binds.iter() {
        let len = run.tape.value(id).len();
        set.tensors.push((name.to_string(), adj.get(id, len)));
    }
    Ok(set)
}
