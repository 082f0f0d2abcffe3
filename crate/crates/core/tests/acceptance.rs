//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test -p ssm-core --test acceptance`; the training-backed
//! criteria (7 and 10) share one fixture and dominate the runtime.

use ssm_core::analysis::{
    default_bin_edges, gate_gap_histogram, layerwise_smoothness, perturbation_probe, Region,
};
use ssm_core::coeffs::SequenceInput;
use ssm_core::grad::check::check_polarized_delta_gradient;
use ssm_core::params::{softplus_inv, AnyParams, PolarizationConfig, Variant};
use ssm_core::rng::Rng64;
use ssm_core::suite;
use ssm_core::tasks::{
    evaluate_ar, generate_ar_dataset, train, ARConfig, ModelConfig, TinyModel, TrainConfig,
};
use std::sync::OnceLock;

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {}: {} — {}",
        criterion,
        if pass { "PASS" } else { "FAIL" },
        detail
    );
    assert!(pass, "{criterion} failed: {detail}");
}

#[test]
fn c01_parallel_form_identity() {
    let rep = suite::check_parallel_equivalence(1000, 0x01).unwrap();
    report("1 parallel-form identity", rep.pass, &rep.detail);
}

#[test]
fn c02_gradient_correctness() {
    let (_records, rep) = suite::check_gradients(200, 0x02).unwrap();
    report("2 gradient correctness", rep.pass, &rep.detail);
}

#[test]
fn c03_recency_envelope() {
    let reports = suite::check_recency(0x03, 256).unwrap();
    for rep in &reports {
        report(&format!("3 {}", rep.name), rep.pass, &rep.detail);
    }
}

#[test]
fn c04_state_gap_contraction() {
    let rep = suite::check_contraction(1000, 0x04).unwrap();
    report("4 state-gap contraction", rep.pass, &rep.detail);
}

#[test]
fn c05_low_pass_cutoff() {
    let rep = suite::check_low_pass(100, 0x05).unwrap();
    report("5 low-pass cutoff", rep.pass, &rep.detail);
}

#[test]
fn c06_polarized_gradient_preservation() {
    // (a) 100 random instances: full Δ gradient vs free-channel-only
    // reconstruction within 1e-10. The Δ bias sits at the top of the init
    // range so the pinned -1000 gate's Δ term is deep under the tolerance.
    let mut worst_gap = 0.0f64;
    let mut worst_zero_term = 0.0f64;
    for i in 0..100 {
        let mut rng = Rng64::new(0x06 ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let n = 3 + rng.below(6);
        let d = 1 + rng.below(3);
        let t_len = 4 + rng.below(29);
        let mut params =
            AnyParams::init(Variant::Mamba, n, d, PolarizationConfig::both(), rng.next_u64())
                .unwrap();
        if let AnyParams::Mamba(m) = &mut params {
            for b in m.delta_bias.iter_mut() {
                *b = softplus_inv(0.1);
            }
        }
        let x = SequenceInput::random(t_len, d, &mut rng);
        let mut cot = vec![0.0; t_len * d];
        rng.fill_uniform(&mut cot, 1.0);
        let rep = check_polarized_delta_gradient(&params, &x, &cot).unwrap();
        assert_eq!(rep.max_one_channel_term, 0.0);
        worst_gap = worst_gap.max(rep.max_full_vs_masked);
        worst_zero_term = worst_zero_term.max(rep.max_zero_channel_term);
    }
    let pass_a = worst_gap < 1e-10;

    // (b) pinned entries bitwise frozen through 100 optimizer steps.
    let model = TinyModel::init(ModelConfig {
        vocab: 16,
        dim: 8,
        state_dim: 5,
        layers: 1,
        variant: Variant::Mamba,
        polarization: PolarizationConfig::both(),
        conv: true,
        seed: 0x66,
    })
    .unwrap();
    let data_cfg = ARConfig {
        vocab_size: 16,
        train_lengths: vec![16],
        kv_fractions: vec![0.25],
        examples_per_cell: 800,
        power_law_exponent: 1.0,
        eval_len: 16,
        eval_kv_counts: vec![2],
        eval_examples_per_cell: 4,
        seed: 3,
    };
    let data = generate_ar_dataset(&data_cfg).unwrap().train;
    let mut trained = model.clone();
    // 100 steps: 800 examples / batch 8 = 100 steps in one epoch.
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 8,
        ..TrainConfig::default()
    };
    train(&mut trained, &data, &cfg).unwrap();
    let name = "block0.mixer.a_diag";
    let before = model
        .tensors()
        .iter()
        .find(|(n, _)| n == name)
        .unwrap()
        .1
        .to_vec();
    let after = trained
        .tensors()
        .iter()
        .find(|(n, _)| n == name)
        .unwrap()
        .1
        .to_vec();
    let frozen = trained.frozen_indices(name);
    let pass_b = !frozen.is_empty()
        && frozen
            .iter()
            .all(|&j| before[j].to_bits() == after[j].to_bits())
        && (0..before.len())
            .filter(|j| !frozen.contains(j))
            .all(|j| before[j] != after[j]);
    report(
        "6 polarized gradient preservation",
        pass_a && pass_b,
        &format!(
            "max |full - masked Δ grad| {worst_gap:.3e} (tol 1e-10), max zero-gate term {worst_zero_term:.3e}; pinned entries bitwise frozen over 100 steps: {pass_b}"
        ),
    );
}

#[test]
fn c08_smoothness_dynamics() {
    // An 8-layer stack whose mixer keeps a_t + Δ_t = 1 identically, so the
    // per-layer contraction bound applies with no data assumptions beyond
    // sign-straddling drives (random inputs give those).
    let model = TinyModel::init(ModelConfig {
        vocab: 32,
        dim: 24,
        state_dim: 6,
        layers: 8,
        variant: Variant::Rwkv,
        polarization: PolarizationConfig::none(),
        conv: false,
        seed: 0x88,
    })
    .unwrap();
    let mut rng = Rng64::new(0x8888);
    let trials = 100;
    let mut bound_ok = 0usize;
    let mut bound_total = 0usize;
    let mut monotone = 0usize;
    for _ in 0..trials {
        let t_len = 48;
        let ids: Vec<u32> = (0..t_len)
            .map(|_| (1 + rng.below(31)) as u32)
            .collect();
        let probes = layerwise_smoothness(&model, &ids).unwrap();
        assert_eq!(probes.len(), 8);
        for p in &probes {
            bound_total += 1;
            if p.bound.condition_equals_one && p.bound.satisfied == Some(true) {
                bound_ok += 1;
            }
        }
        if probes.last().unwrap().block_out <= probes.first().unwrap().block_out {
            monotone += 1;
        }
    }
    let frac = monotone as f64 / trials as f64;
    let pass = bound_ok == bound_total && frac >= 0.9;
    report(
        "8 smoothness dynamics",
        pass,
        &format!(
            "per-layer bound satisfied {bound_ok}/{bound_total}; block-output ε(last) ≤ ε(first) on {:.0}% of {trials} inputs (need ≥ 90%)",
            100.0 * frac
        ),
    );
}

#[test]
fn c09_gate_gap_histogram() {
    // The streamed histogram must agree exactly with a fully materialized
    // oracle; the trained-model concentration statistic is reported only.
    let params = AnyParams::init(Variant::Mamba, 8, 6, PolarizationConfig::none(), 0x99).unwrap();
    let mut rng = Rng64::new(0x9999);
    let inputs: Vec<SequenceInput> = (0..16)
        .map(|_| SequenceInput::random(64, 6, &mut rng))
        .collect();
    let hist = gate_gap_histogram(&params, &inputs, &default_bin_edges()).unwrap();

    let n = params.state_dim();
    let mut all: Vec<Vec<f64>> = vec![Vec::new(); 6 * n];
    for x in &inputs {
        for (d, ch) in params.build(x).unwrap().iter().enumerate() {
            for t in 0..ch.t_len() {
                for j in 0..n {
                    all[d * n + j].push(ch.a_at(t, j));
                }
            }
        }
    }
    let mut exact = true;
    for (idx, gates) in all.iter().enumerate() {
        let mx = gates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mn = gates.iter().cloned().fold(f64::INFINITY, f64::min);
        exact &= hist.gaps[idx] == mx - mn;
    }
    for (&edge, &cum) in hist.bin_edges.iter().zip(&hist.cumulative) {
        let oracle = hist.gaps.iter().filter(|&&g| g <= edge).count() as f64
            / hist.gaps.len() as f64;
        exact &= cum == oracle;
    }
    report(
        "9 gate-gap histogram",
        exact,
        &format!(
            "streamed histogram matches materialized oracle exactly; at init {:.1}% of channels below gap 0.5 (reported, not asserted)",
            100.0 * hist.fraction_below_half
        ),
    );
}

// --------------------------------------------------------------------------
// Criteria 7 and 10 share trained models: three configurations over three
// seeds at the scaled recall benchmark.

struct TrainedRuns {
    /// (config name, per-seed eval tables)
    tables: Vec<(String, Vec<ssm_core::tasks::EvalTable>)>,
    /// Default-configuration models per seed, reused by the probe.
    default_models: Vec<TinyModel>,
    eval_sets: Vec<Vec<(usize, Vec<ssm_core::tasks::ARExample>)>>,
}

fn desk_data(seed: u64) -> ARConfig {
    ARConfig {
        examples_per_cell: 1000,
        eval_examples_per_cell: 256,
        seed,
        ..ARConfig::desk_default()
    }
}

fn desk_train() -> TrainConfig {
    TrainConfig {
        epochs: 16,
        batch_size: 16,
        learning_rate: 2e-3,
        ..TrainConfig::default()
    }
}

/// Free (learnable) state channels; pinned gate channels are added on top,
/// mirroring the prepend/append construction.
const FREE_STATE: usize = 4;
const SEEDS: [u64; 3] = [11, 22, 33];

fn trained_runs() -> &'static TrainedRuns {
    static RUNS: OnceLock<TrainedRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let configs: [(&str, usize, PolarizationConfig); 3] = [
            ("default-2L", 2, PolarizationConfig::none()),
            ("1pol-2L", 2, PolarizationConfig::one_only()),
            ("bothpol-4L", 4, PolarizationConfig::both()),
        ];
        let mut tables: Vec<(String, Vec<ssm_core::tasks::EvalTable>)> = configs
            .iter()
            .map(|(n, _, _)| (n.to_string(), Vec::new()))
            .collect();
        let mut default_models = Vec::new();
        let mut eval_sets = Vec::new();
        for &seed in &SEEDS {
            let ds = generate_ar_dataset(&desk_data(seed)).unwrap();
            for (ci, (_, layers, polar)) in configs.iter().enumerate() {
                let mut model = TinyModel::init(ModelConfig {
                    vocab: 64,
                    dim: 64,
                    state_dim: FREE_STATE + polar.extra(),
                    layers: *layers,
                    variant: Variant::Mamba,
                    polarization: *polar,
                    conv: true,
                    seed: seed.wrapping_mul(0x9e37).wrapping_add(17 + ci as u64),
                })
                .unwrap();
                let mut tc = desk_train();
                tc.seed = seed ^ 0xbeef;
                train(&mut model, &ds.train, &tc).unwrap();
                let table = evaluate_ar(&model, &ds.eval).unwrap();
                println!(
                    "  trained {} seed {}: avg {:.2}% [{}]",
                    configs[ci].0,
                    seed,
                    100.0 * table.average,
                    table
                        .rows
                        .iter()
                        .map(|r| format!("{}:{:.1}", r.kv_pairs, 100.0 * r.accuracy))
                        .collect::<Vec<_>>()
                        .join(" ")
                );
                if ci == 0 {
                    default_models.push(model);
                }
                tables[ci].1.push(table);
            }
            eval_sets.push(ds.eval);
        }
        TrainedRuns {
            tables,
            default_models,
            eval_sets,
        }
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn c07_polarization_ordering() {
    let runs = trained_runs();
    let avg = |name: &str| {
        mean(
            runs.tables
                .iter()
                .find(|(n, _)| n == name)
                .unwrap()
                .1
                .iter()
                .map(|t| t.average),
        )
    };
    let hardest = |name: &str| {
        mean(
            runs.tables
                .iter()
                .find(|(n, _)| n == name)
                .unwrap()
                .1
                .iter()
                .map(|t| t.rows.last().unwrap().accuracy),
        )
    };
    let a_def = avg("default-2L");
    let a_one = avg("1pol-2L");
    let a_both = avg("bothpol-4L");
    let h_def = hardest("default-2L");
    let h_both = hardest("bothpol-4L");
    let ordering = a_both > a_one && a_one > a_def;
    let margin = (h_both - h_def) * 100.0;
    let pass = ordering && margin >= 5.0;
    report(
        "7 polarization ordering",
        pass,
        &format!(
            "mean avg acc: bothpol-4L {:.2}% > 1pol-2L {:.2}% > default-2L {:.2}% ({}); hardest-split margin {:.1} pts (need ≥ 5)",
            100.0 * a_both,
            100.0 * a_one,
            100.0 * a_def,
            ordering,
            margin
        ),
    );
}

#[test]
fn c10_perturbation_direction() {
    let runs = trained_runs();
    let mut trailing_drops = Vec::new();
    let mut leading_drops = Vec::new();
    for (si, model) in runs.default_models.iter().enumerate() {
        // Hardest split; corrupt a quarter of its kv section.
        let (pairs, split) = runs.eval_sets[si].last().unwrap();
        let k = pairs / 2;
        let lead =
            perturbation_probe(model, split, Region::Leading, k, 0x10 + si as u64).unwrap();
        let trail =
            perturbation_probe(model, split, Region::Trailing, k, 0x10 + si as u64).unwrap();
        println!(
            "  probe seed {}: clean {:.1}%, leading drop {:.2}, trailing drop {:.2}",
            SEEDS[si],
            100.0 * lead.clean_accuracy,
            100.0 * lead.drop,
            100.0 * trail.drop
        );
        leading_drops.push(lead.drop);
        trailing_drops.push(trail.drop);
    }
    let mean_lead = mean(leading_drops.iter().copied());
    let mean_trail = mean(trailing_drops.iter().copied());
    let pass = mean_trail > mean_lead;
    report(
        "10 perturbation direction",
        pass,
        &format!(
            "mean accuracy drop: trailing {:.2} vs leading {:.2} over {} seeds",
            100.0 * mean_trail,
            100.0 * mean_lead,
            SEEDS.len()
        ),
    );
}
