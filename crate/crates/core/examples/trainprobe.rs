// 3-config ordering probe with configurable free state size
use ssm_core::params::{PolarizationConfig, Variant};
use ssm_core::tasks::data::{generate_ar_dataset, ARConfig};
use ssm_core::tasks::eval::evaluate_ar;
use ssm_core::tasks::model::{ModelConfig, TinyModel};
use ssm_core::tasks::train::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_free: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let per_cell: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);
    let which: Option<usize> = args.get(5).and_then(|s| s.parse().ok());
    let alpha: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let cfg = ARConfig {
        examples_per_cell: per_cell,
        eval_examples_per_cell: 256,
        power_law_exponent: alpha,
        seed,
        ..ARConfig::desk_default()
    };
    let ds = generate_ar_dataset(&cfg).unwrap();
    let configs = [
        ("default-2L", 2usize, PolarizationConfig::none()),
        ("1pol-2L", 2, PolarizationConfig::one_only()),
        ("bothpol-4L", 4, PolarizationConfig::both()),
    ];
    for (ci, (name, layers, polar)) in configs.iter().enumerate() {
        if let Some(w) = which { if w != ci { continue; } }
        let state_dim = n_free + polar.extra();
        let mut model = TinyModel::init(ModelConfig {
            vocab: 64, dim: 64, state_dim, layers: *layers,
            variant: Variant::Mamba,
            polarization: *polar,
            conv: true, seed: seed.wrapping_mul(0x9e37).wrapping_add(17 + ci as u64),
        }).unwrap();
        let tc = TrainConfig { epochs, batch_size: 16, learning_rate: 2e-3, seed: seed ^ 0xbeef, ..TrainConfig::default() };
        let t0 = std::time::Instant::now();
        let m = train(&mut model, &ds.train, &tc).unwrap();
        let table = evaluate_ar(&model, &ds.eval).unwrap();
        let accs: Vec<String> = table.rows.iter().map(|r| format!("{}:{:.1}", r.kv_pairs, 100.0*r.accuracy)).collect();
        println!("{name:12} nfree={n_free} alpha={alpha} seed={seed}: train_acc={:.3} avg={:.2} [{}] ({:.0}s)",
            m.last().unwrap().accuracy, 100.0*table.average, accs.join(" "), t0.elapsed().as_secs_f32());
    }
}
