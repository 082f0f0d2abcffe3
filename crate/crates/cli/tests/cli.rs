//! End-to-end checks of the binary: exit codes, output files, determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ssmlab"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ssmlab_test_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn unknown_flag_exits_two() {
    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_two() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_parse_error_exits_two() {
    let dir = tmp_dir("badcfg");
    let cfg = write_config(&dir, "bad.json", "{ \"seed\": ");
    let out = bin()
        .args(["check", "theorems", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("parse error"), "stderr: {stderr}");
}

#[test]
fn check_theorems_reduced_counts_pass() {
    let dir = tmp_dir("check");
    let cfg = write_config(
        &dir,
        "check.json",
        r#"{
            "check": {
                "parallel_instances": 60,
                "gradient_instances": 12,
                "contraction_instances": 60,
                "low_pass_instances": 10,
                "selective_t": 96
            }
        }"#,
    );
    let out_dir = dir.join("out");
    let out = bin()
        .args(["check", "theorems", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "stdout: {stdout}");
    assert_eq!(stdout.matches("PASS").count(), 7, "stdout: {stdout}");
    assert!(out_dir.join("gradcheck.csv").exists());
    assert!(out_dir.join("report.json").exists());
    assert!(out_dir.join("manifest.json").exists());
    let csv = std::fs::read_to_string(out_dir.join("gradcheck.csv")).unwrap();
    assert!(csv.starts_with("variant,seed,tensor,max_rel_err,pass\n"));
}

fn micro_config() -> &'static str {
    r#"{
        "seed": 5,
        "model": { "vocab": 16, "dim": 8, "state_dim": 3, "layers": 1, "variant": "mamba", "conv": true },
        "data": {
            "vocab_size": 16,
            "train_lengths": [16],
            "kv_fractions": [0.25],
            "examples_per_cell": 64,
            "power_law_exponent": 1.0,
            "eval_len": 16,
            "eval_kv_counts": [1, 2],
            "eval_examples_per_cell": 8,
            "seed": 5
        },
        "train": { "batch_size": 16, "learning_rate": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "epochs": 2, "grad_clip": 1.0, "seed": 5 }
    }"#
}

#[test]
fn train_then_eval_roundtrip() {
    let dir = tmp_dir("train");
    let cfg = write_config(&dir, "micro.json", micro_config());
    let train_out = dir.join("train");
    let out = bin()
        .args(["train", "ar", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&train_out)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(train_out.join("model.bin").exists());
    assert!(train_out.join("metrics.csv").exists());
    let metrics = std::fs::read_to_string(train_out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,split,loss,accuracy\n"));

    let eval_out = dir.join("eval");
    let out = bin()
        .args(["eval", "ar", "--config"])
        .arg(&cfg)
        .arg("--checkpoint")
        .arg(train_out.join("model.bin"))
        .arg("--out")
        .arg(&eval_out)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let eval = std::fs::read_to_string(eval_out.join("eval.csv")).unwrap();
    let lines: Vec<&str> = eval.lines().collect();
    assert_eq!(lines[0], "kv_pairs,accuracy");
    // One row per kv split plus the average row.
    assert_eq!(lines.len(), 1 + 2 + 1);
    assert!(lines.last().unwrap().starts_with("avg,"));

    // Perturbation probe on the same checkpoint.
    let probe_out = dir.join("probe");
    let probe_cfg = write_config(
        &dir,
        "probe.json",
        &micro_config().replace(
            "\"train\":",
            "\"probe\": { \"k\": 1, \"kv_pairs\": 2 }, \"train\":",
        ),
    );
    let out = bin()
        .args(["probe", "perturb", "--config"])
        .arg(&probe_cfg)
        .arg("--checkpoint")
        .arg(train_out.join("model.bin"))
        .arg("--out")
        .arg(&probe_out)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let probe = std::fs::read_to_string(probe_out.join("probe.csv")).unwrap();
    assert!(probe.starts_with("region,k,clean_accuracy,corrupted_accuracy,drop\n"));
    assert_eq!(probe.lines().count(), 3);
}

#[test]
fn data_gen_writes_containers_and_manifest() {
    let dir = tmp_dir("data");
    let cfg = write_config(&dir, "micro.json", micro_config());
    let out_dir = dir.join("out");
    let out = bin()
        .args(["data", "gen-ar", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out_dir.join("dataset_train.bin").exists());
    assert!(out_dir.join("dataset_eval_kv1.bin").exists());
    assert!(out_dir.join("dataset_eval_kv2.bin").exists());
    let manifest = std::fs::read_to_string(out_dir.join("dataset_manifest.json")).unwrap();
    assert!(manifest.contains("checksum_fnv1a64"));
}

#[test]
fn identical_runs_identical_outputs() {
    let dir = tmp_dir("repro");
    let cfg = write_config(&dir, "micro.json", micro_config());
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let out_dir = dir.join(tag);
        let out = bin()
            .args(["analyze", "influence", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        outputs.push((
            std::fs::read(out_dir.join("influence.csv")).unwrap(),
            std::fs::read(out_dir.join("decay.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "influence.csv must be byte-identical");
    assert_eq!(outputs[0].1, outputs[1].1, "decay.csv must be byte-identical");
}

#[test]
fn analyze_commands_emit_their_csvs() {
    let dir = tmp_dir("analyze");
    let cfg = write_config(
        &dir,
        "an.json",
        r#"{
            "seed": 2,
            "model": { "vocab": 16, "dim": 8, "state_dim": 3, "layers": 3, "variant": "rwkv", "conv": false },
            "analyze": { "variant": "mamba", "state_dim": 4, "channels": 2, "t_len": 48, "num_inputs": 4, "layers": 3 }
        }"#,
    );
    for (cmd, files) in [
        ("smoothness", vec!["smoothness.csv", "bound.csv"]),
        ("spectrum", vec!["spectrum.csv"]),
        ("gate-gap", vec!["histogram.csv"]),
    ] {
        let out_dir = dir.join(cmd);
        let out = bin()
            .args(["analyze", cmd, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(
            out.status.code(),
            Some(0),
            "{cmd} stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        for f in files {
            assert!(out_dir.join(f).exists(), "{cmd} must write {f}");
        }
        assert!(out_dir.join("report.json").exists());
        assert!(out_dir.join("manifest.json").exists());
    }
}
