//! Command implementations: each writes CSV outputs plus a manifest echoing
//! the fully resolved configuration.

use crate::config::{AnalyzeSection, CheckSection, ProbeSection, RunConfig};
use anyhow::Context as _;
use ssm_core::analysis::{
    default_bin_edges, default_grid, fit_decay_rate, frequency_response, gate_gap_histogram,
    influence_matrix, layerwise_smoothness, perturbation_probe, ChannelAggregation, Region,
};
use ssm_core::coeffs::SequenceInput;
use ssm_core::io;
use ssm_core::params::{AnyParams, S4Params};
use ssm_core::rng::Rng64;
use ssm_core::suite;
use ssm_core::tasks::{
    evaluate_ar, generate_ar_dataset, train, ARConfig, TinyModel,
};
use std::path::{Path, PathBuf};

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub seed_flag: Option<u64>,
    pub verbose: u8,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.cfg.seed(self.seed_flag)
    }

    fn manifest(&self, command: &str, resolved: serde_json::Value) -> anyhow::Result<()> {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let doc = serde_json::json!({
            "command": command,
            "version": ssm_core::VERSION,
            "seed": self.seed(),
            "unix_time": stamp,
            "resolved_config": resolved,
        });
        io::write_json(self.out.join("manifest.json"), &doc)?;
        Ok(())
    }
}

// ------------------------------------------------------------------- checks

pub fn check_theorems(ctx: &Ctx) -> anyhow::Result<i32> {
    let section = ctx.cfg.check.clone().unwrap_or_default();
    let seed = ctx.seed();
    ctx.manifest("check theorems", serde_json::to_value(&section)?)?;

    let CheckSection {
        parallel_instances,
        gradient_instances,
        contraction_instances,
        low_pass_instances,
        selective_t,
    } = section;

    let mut reports = Vec::new();
    reports.push(suite::check_parallel_equivalence(parallel_instances, seed)?);
    let (grad_records, grad_report) = suite::check_gradients(gradient_instances, seed)?;
    reports.push(grad_report);
    reports.extend(suite::check_recency(seed, selective_t)?);
    reports.push(suite::check_contraction(contraction_instances, seed)?);
    reports.push(suite::check_low_pass(low_pass_instances, seed)?);

    let rows: Vec<Vec<String>> = grad_records
        .iter()
        .map(|r| {
            vec![
                r.variant.clone(),
                r.seed.to_string(),
                r.tensor.clone(),
                r.max_rel_err.to_string(),
                r.pass.to_string(),
            ]
        })
        .collect();
    io::write_csv(
        ctx.out.join("gradcheck.csv"),
        &["variant", "seed", "tensor", "max_rel_err", "pass"],
        &rows,
    )?;
    io::write_json(ctx.out.join("report.json"), &serde_json::to_value(&reports)?)?;

    let mut all_pass = true;
    for r in &reports {
        println!("{} {} — {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
        all_pass &= r.pass;
    }
    Ok(if all_pass { 0 } else { 1 })
}

// ----------------------------------------------------------------- analyses

fn analyze_params(section: &AnalyzeSection, seed: u64) -> anyhow::Result<AnyParams> {
    Ok(AnyParams::init(
        section.variant,
        section.state_dim,
        section.channels,
        section.polarization,
        seed,
    )?)
}

pub fn analyze_influence(ctx: &Ctx) -> anyhow::Result<()> {
    let section = ctx.cfg.analyze.clone().unwrap_or_default();
    let seed = ctx.seed();
    ctx.manifest("analyze influence", serde_json::to_value(&section)?)?;
    let params = analyze_params(&section, seed)?;
    let mut rng = Rng64::new(seed ^ 0x1f);
    let x = SequenceInput::random(section.t_len, section.channels, &mut rng);
    let m = influence_matrix(&params, &x, 0, ChannelAggregation::MaxAbs)?;

    let mut rows = Vec::new();
    for t in 0..m.t_len {
        for s in 0..=t {
            rows.push(vec![
                t.to_string(),
                s.to_string(),
                (t - s).to_string(),
                m.score(t, s).to_string(),
            ]);
        }
    }
    io::write_csv(ctx.out.join("influence.csv"), &["t", "s", "lag", "score"], &rows)?;

    let env = m.lag_envelope();
    let decay_rows: Vec<Vec<String>> = env
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0.0)
        .map(|(lag, &e)| vec![lag.to_string(), e.ln().to_string()])
        .collect();
    io::write_csv(ctx.out.join("decay.csv"), &["lag", "log_env"], &decay_rows)?;

    let fit = fit_decay_rate(&m, 1..section.t_len / 2)?;
    io::write_json(ctx.out.join("report.json"), &serde_json::to_value(&fit)?)?;
    if ctx.verbose > 0 {
        println!(
            "influence: κ̂ = {:.5}, theoretical κ = {:.5}, R² = {:.4}",
            fit.kappa_hat, fit.kappa_theoretical, fit.r_squared
        );
    }
    Ok(())
}

pub fn analyze_smoothness(ctx: &Ctx) -> anyhow::Result<()> {
    let model_section = ctx.cfg.model.clone().unwrap_or_default();
    let seed = ctx.seed();
    ctx.manifest("analyze smoothness", serde_json::to_value(&model_section)?)?;
    let model = TinyModel::init(model_section.to_model_config(Some(seed)))?;
    let mut rng = Rng64::new(seed ^ 0x51);
    let t_len = ctx.cfg.analyze.clone().unwrap_or_default().t_len;
    let ids: Vec<u32> = (0..t_len)
        .map(|_| (1 + rng.below(model.config.vocab - 1)) as u32)
        .collect();
    let probes = layerwise_smoothness(&model, &ids)?;

    let mut rows = Vec::new();
    let mut bound_rows = Vec::new();
    for p in &probes {
        for (probe, eps) in [
            ("encoded", p.encoded),
            ("states", p.states),
            ("mixer_out", p.mixer_out),
            ("block_out", p.block_out),
        ] {
            rows.push(vec![p.layer.to_string(), probe.to_string(), eps.to_string()]);
        }
        bound_rows.push(vec![
            p.layer.to_string(),
            p.bound.lhs.to_string(),
            p.bound.rhs.to_string(),
            p.bound
                .satisfied
                .map(|s| s.to_string())
                .unwrap_or_else(|| "unclaimed".into()),
        ]);
    }
    io::write_csv(ctx.out.join("smoothness.csv"), &["layer", "probe", "epsilon"], &rows)?;
    io::write_csv(
        ctx.out.join("bound.csv"),
        &["instance", "lhs", "rhs", "satisfied"],
        &bound_rows,
    )?;
    io::write_json(ctx.out.join("report.json"), &serde_json::to_value(&probes)?)?;
    Ok(())
}

pub fn analyze_spectrum(ctx: &Ctx) -> anyhow::Result<()> {
    let section = ctx.cfg.analyze.clone().unwrap_or_default();
    let seed = ctx.seed();
    ctx.manifest("analyze spectrum", serde_json::to_value(&section)?)?;
    let mut rng = Rng64::new(seed);
    let s4 = S4Params::init(section.state_dim, &mut rng)?;
    let grid = default_grid();
    let resp = frequency_response(&s4, &grid, &section.epsilons)?;
    let rows: Vec<Vec<String>> = grid
        .iter()
        .zip(&resp.magnitudes)
        .map(|(w, m)| vec![w.to_string(), m.to_string()])
        .collect();
    io::write_csv(ctx.out.join("spectrum.csv"), &["omega", "magnitude"], &rows)?;
    io::write_json(ctx.out.join("report.json"), &serde_json::to_value(&resp.cutoffs)?)?;
    Ok(())
}

pub fn analyze_gate_gap(ctx: &Ctx) -> anyhow::Result<()> {
    let section = ctx.cfg.analyze.clone().unwrap_or_default();
    let seed = ctx.seed();
    ctx.manifest("analyze gate-gap", serde_json::to_value(&section)?)?;
    let params = analyze_params(&section, seed)?;
    let mut rng = Rng64::new(seed ^ 0xbadc0de);
    let inputs: Vec<SequenceInput> = (0..section.num_inputs)
        .map(|_| SequenceInput::random(section.t_len, section.channels, &mut rng))
        .collect();
    let hist = gate_gap_histogram(&params, &inputs, &default_bin_edges())?;
    let rows: Vec<Vec<String>> = hist
        .bin_edges
        .iter()
        .zip(&hist.cumulative)
        .map(|(e, c)| vec![e.to_string(), c.to_string()])
        .collect();
    io::write_csv(ctx.out.join("histogram.csv"), &["bin_edge", "cumulative"], &rows)?;
    io::write_json(
        ctx.out.join("report.json"),
        &serde_json::json!({
            "channels": hist.gaps.len(),
            "fraction_below_half": hist.fraction_below_half,
        }),
    )?;
    println!(
        "gate-gap: {:.1}% of {} channels have max-min gap below 0.5",
        100.0 * hist.fraction_below_half,
        hist.gaps.len()
    );
    Ok(())
}

// ----------------------------------------------------------- data / training

pub fn data_gen_ar(ctx: &Ctx) -> anyhow::Result<()> {
    let mut data_cfg = ctx.cfg.data.clone().unwrap_or_else(ARConfig::desk_default);
    if let Some(seed) = ctx.seed_flag {
        data_cfg.seed = seed;
    }
    let ds = generate_ar_dataset(&data_cfg)?;
    let train_bytes = io::encode_examples(&ds.train);
    let checksum = io::fnv1a64(&train_bytes);
    io::write_bytes(ctx.out.join("dataset_train.bin"), &train_bytes)?;
    let mut eval_counts = Vec::new();
    for (pairs, split) in &ds.eval {
        io::write_bytes(
            ctx.out.join(format!("dataset_eval_kv{pairs}.bin")),
            &io::encode_examples(split),
        )?;
        eval_counts.push((*pairs, split.len()));
    }
    io::write_json(
        ctx.out.join("dataset_manifest.json"),
        &io::dataset_manifest(&data_cfg, ds.train.len(), &eval_counts, checksum),
    )?;
    ctx.manifest("data gen-ar", serde_json::to_value(&data_cfg)?)?;
    println!(
        "wrote {} train examples and {} eval splits to {}",
        ds.train.len(),
        eval_counts.len(),
        ctx.out.display()
    );
    Ok(())
}

pub fn train_ar(ctx: &Ctx) -> anyhow::Result<()> {
    let model_section = ctx.cfg.model.clone().unwrap_or_default();
    let mut data_cfg = ctx.cfg.data.clone().unwrap_or_else(ARConfig::desk_default);
    let mut train_cfg = ctx.cfg.train.clone().unwrap_or_default();
    if let Some(seed) = ctx.seed_flag {
        data_cfg.seed = seed;
        train_cfg.seed = seed;
    }
    ctx.manifest(
        "train ar",
        serde_json::json!({
            "model": model_section,
            "data": data_cfg,
            "train": train_cfg,
        }),
    )?;

    let ds = generate_ar_dataset(&data_cfg)?;
    let mut model = TinyModel::init(model_section.to_model_config(ctx.seed_flag))?;
    let metrics = train(&mut model, &ds.train, &train_cfg)?;

    let mut rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|m| {
            vec![
                m.epoch.to_string(),
                "train".to_string(),
                m.loss.to_string(),
                m.accuracy.to_string(),
            ]
        })
        .collect();
    let table = evaluate_ar(&model, &ds.eval)?;
    for row in &table.rows {
        rows.push(vec![
            (metrics.len().saturating_sub(1)).to_string(),
            format!("eval_kv{}", row.kv_pairs),
            String::new(),
            row.accuracy.to_string(),
        ]);
    }
    io::write_csv(
        ctx.out.join("metrics.csv"),
        &["epoch", "split", "loss", "accuracy"],
        &rows,
    )?;
    io::write_bytes(ctx.out.join("model.bin"), &io::encode_model(&model))?;
    write_eval_table(&ctx.out.join("eval.csv"), &table)?;
    println!(
        "trained {} epochs; eval avg accuracy {:.2}%",
        metrics.len(),
        100.0 * table.average
    );
    Ok(())
}

fn write_eval_table(path: &Path, table: &ssm_core::tasks::EvalTable) -> anyhow::Result<()> {
    let mut rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| vec![r.kv_pairs.to_string(), r.accuracy.to_string()])
        .collect();
    rows.push(vec!["avg".to_string(), table.average.to_string()]);
    io::write_csv(path, &["kv_pairs", "accuracy"], &rows)?;
    Ok(())
}

pub fn eval_ar(ctx: &Ctx, checkpoint: &Path) -> anyhow::Result<()> {
    let mut data_cfg = ctx.cfg.data.clone().unwrap_or_else(ARConfig::desk_default);
    if let Some(seed) = ctx.seed_flag {
        data_cfg.seed = seed;
    }
    ctx.manifest("eval ar", serde_json::to_value(&data_cfg)?)?;
    let model = io::decode_model(&io::read_bytes(checkpoint).context("reading checkpoint")?)?;
    let ds = generate_ar_dataset(&data_cfg)?;
    let table = evaluate_ar(&model, &ds.eval)?;
    write_eval_table(&ctx.out.join("eval.csv"), &table)?;
    for row in &table.rows {
        println!("kv {}: {:.2}%", row.kv_pairs, 100.0 * row.accuracy);
    }
    println!("avg: {:.2}%", 100.0 * table.average);
    Ok(())
}

pub fn probe_perturb(ctx: &Ctx, checkpoint: &Path) -> anyhow::Result<()> {
    let mut data_cfg = ctx.cfg.data.clone().unwrap_or_else(ARConfig::desk_default);
    let probe_cfg: ProbeSection = ctx.cfg.probe.clone().unwrap_or_default();
    if let Some(seed) = ctx.seed_flag {
        data_cfg.seed = seed;
    }
    ctx.manifest(
        "probe perturb",
        serde_json::json!({"data": data_cfg, "probe": probe_cfg}),
    )?;
    let model = io::decode_model(&io::read_bytes(checkpoint).context("reading checkpoint")?)?;
    let ds = generate_ar_dataset(&data_cfg)?;
    let split = match probe_cfg.kv_pairs {
        Some(k) => ds
            .eval
            .iter()
            .find(|(pairs, _)| *pairs == k)
            .ok_or_else(|| anyhow::anyhow!("no eval split with {k} pairs"))?,
        None => ds.eval.last().expect("at least one eval split"),
    };
    let seed = ctx.seed();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for region in [Region::Leading, Region::Trailing] {
        let rep = perturbation_probe(&model, &split.1, region, probe_cfg.k, seed ^ 0x9e37)?;
        rows.push(vec![
            format!("{region:?}").to_lowercase(),
            rep.k.to_string(),
            rep.clean_accuracy.to_string(),
            rep.corrupted_accuracy.to_string(),
            rep.drop.to_string(),
        ]);
        println!(
            "{:?} k={}: clean {:.2}% corrupted {:.2}% drop {:.2}",
            region,
            rep.k,
            100.0 * rep.clean_accuracy,
            100.0 * rep.corrupted_accuracy,
            100.0 * rep.drop
        );
        reports.push(rep);
    }
    io::write_csv(
        ctx.out.join("probe.csv"),
        &["region", "k", "clean_accuracy", "corrupted_accuracy", "drop"],
        &rows,
    )?;
    io::write_json(ctx.out.join("report.json"), &serde_json::to_value(&reports)?)?;
    Ok(())
}

