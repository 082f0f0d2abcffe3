//! Central finite differences, the independent oracle against which the
//! analytic tape gradients are judged. This module must never call into the
//! backward sweep; it only evaluates forwards at perturbed points.

use super::layer::layer_outputs;
use crate::coeffs::SequenceInput;
use crate::params::AnyParams;
use crate::Result;

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-4;

/// (f(x + h·e_{t,d}) − f(x − h·e_{t,d})) / 2h for every output component.
pub fn finite_difference(
    params: &AnyParams,
    x: &SequenceInput,
    component: (usize, usize),
    h: f64,
) -> Result<Vec<f64>> {
    assert!(h > 0.0);
    let (t, d) = component;
    let idx = t * x.channels() + d;
    let mut plus = x.clone();
    plus.values_mut()[idx] += h;
    let mut minus = x.clone();
    minus.values_mut()[idx] -= h;
    let yp = layer_outputs(params, &plus)?;
    let ym = layer_outputs(params, &minus)?;
    Ok(yp
        .iter()
        .zip(&ym)
        .map(|(p, m)| (p - m) / (2.0 * h))
        .collect())
}

/// Central-difference gradient of ⟨cot, y(x)⟩ with respect to every input
/// component.
pub fn fd_input_gradient(
    params: &AnyParams,
    x: &SequenceInput,
    cot: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; x.values().len()];
    for t in 0..x.t_len() {
        for d in 0..x.channels() {
            let diffs = finite_difference(params, x, (t, d), h)?;
            grad[t * x.channels() + d] = diffs.iter().zip(cot).map(|(g, c)| g * c).sum();
        }
    }
    Ok(grad)
}

/// Central-difference gradient of ⟨cot, y(x)⟩ with respect to every
/// parameter scalar, tensor by tensor. The step is scaled per scalar,
/// h·max(|θ|, 0.01): parameters like the step size live at scale 1e-3,
/// where a fixed 1e-4 perturbation is 10% of the value and the exponential
/// curvature swamps the first-order term.
pub fn fd_param_gradient(
    params: &AnyParams,
    x: &SequenceInput,
    cot: &[f64],
    h: f64,
) -> Result<Vec<(String, Vec<f64>)>> {
    let loss = |p: &AnyParams| -> Result<f64> {
        let y = layer_outputs(p, x)?;
        Ok(y.iter().zip(cot).map(|(a, b)| a * b).sum())
    };
    let names: Vec<String> = params
        .tensors()
        .iter()
        .map(|(n, _)| n.to_string())
        .collect();
    let mut out = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let len = params.tensors()[ti].1.len();
        let mut grad = vec![0.0; len];
        for j in 0..len {
            let step = h * params.tensors()[ti].1[j].abs().max(1e-2);
            let mut p_plus = params.clone();
            p_plus.tensors_mut()[ti].1[j] += step;
            let mut p_minus = params.clone();
            p_minus.tensors_mut()[ti].1[j] -= step;
            grad[j] = (loss(&p_plus)? - loss(&p_minus)?) / (2.0 * step);
        }
        out.push((name.clone(), grad));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{PolarizationConfig, Variant};
    use crate::rng::Rng64;

    #[test]
    fn linear_model_fd_is_exact_to_float_noise() {
        // LA with linear maps is linear in x through b and Δ but quadratic
        // through the q·h product; a purely linear probe: perturb with the
        // decode weights frozen at the truth by using tiny h and comparing
        // with the analytic tape.
        let params = AnyParams::init(Variant::La, 2, 1, PolarizationConfig::none(), 5).unwrap();
        let mut rng = Rng64::new(9);
        let x = SequenceInput::random(6, 1, &mut rng);
        let run = crate::grad::forward_with_tape(&params, &x).unwrap();
        let t_len = x.t_len();
        let mut cot = vec![0.0; t_len];
        cot[t_len - 1] = 1.0;
        let analytic = crate::grad::backward(&run, &cot).unwrap();
        let fd = fd_input_gradient(&params, &x, &cot, FD_STEP).unwrap();
        for (a, n) in analytic.input.iter().zip(&fd) {
            assert!((a - n).abs() < 1e-7, "analytic {a} vs fd {n}");
        }
    }

    #[test]
    fn softplus_derivative_at_zero_is_half() {
        // Central difference of softplus at 0 ≈ σ(0) = 1/2.
        let h = FD_STEP;
        let d = (crate::params::softplus(h) - crate::params::softplus(-h)) / (2.0 * h);
        assert!((d - 0.5).abs() < 1e-9);
    }
}
