use ssm_core::params::{PolarizationConfig, Variant};
use ssm_core::rng::Rng64;
use ssm_core::tasks::data::generate_example;
use ssm_core::tasks::fused;
use ssm_core::tasks::model::{ModelConfig, TinyModel};
use std::time::Instant;

fn main() {
    let model = TinyModel::init(ModelConfig {
        vocab: 64, dim: 64, state_dim: 16, layers: 2,
        variant: Variant::Mamba, polarization: PolarizationConfig::none(),
        conv: true, seed: 1,
    }).unwrap();
    let mut rng = Rng64::new(3);
    let ex = generate_example(64, 128, 32, 1.0, &mut rng).unwrap();
    let mut ws = fused::Workspace::default();
    let sizes: Vec<usize> = model.tensors().iter().map(|(_, t)| t.len()).collect();
    let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    // warm
    for _ in 0..3 { fused::loss_and_grad(&model, &ex, &mut ws, &mut grads).unwrap(); }
    let reps = 100;
    let t0 = Instant::now();
    for _ in 0..reps { fused::forward(&model, &ex.input, &mut ws).unwrap(); }
    let fwd = t0.elapsed().as_secs_f64()/reps as f64;
    let t0 = Instant::now();
    for _ in 0..reps { fused::loss_and_grad(&model, &ex, &mut ws, &mut grads).unwrap(); }
    let full = t0.elapsed().as_secs_f64()/reps as f64;
    println!("T=128 2L fused: fwd {:.2}ms, fwd+bwd {:.2}ms", fwd*1e3, full*1e3);
}
