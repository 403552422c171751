//! End-to-end exercises of the `miml` binary: the full pipeline on
//! synthetic data, seed determinism, the converter on an NPZ fixture, and
//! the exit-code contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn miml(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_miml"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_synth_spec(dir: &Path, n_bags: usize, seed: u64) -> std::path::PathBuf {
    let spec = format!(
        r#"{{
  "n_bags": {n_bags},
  "n_labels": 3,
  "bag_size": 5,
  "feature_dim": 8,
  "positives_per_bag": [1, 2],
  "observe_rate": 0.9,
  "noise_scale": 0.06,
  "seed": {seed},
  "test_fraction": 0.25
}}"#
    );
    let path = dir.join("spec.json");
    fs::write(&path, spec).unwrap();
    path
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn full_pipeline_synth_train_evaluate_attention_report() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let spec = write_synth_spec(root, 60, 5);

    let out = miml(
        &["synth", "--spec", spec.to_str().unwrap(), "--out", "data"],
        root,
    );
    assert_success(&out, "synth");
    assert!(root.join("data/manifest.json").exists());
    assert!(root.join("data/instance_truth.json").exists());

    // Two seeds of the attention model via the multi-seed driver.
    let out = miml(
        &[
            "train", "--data", "data", "--model", "att", "--seeds", "1,2", "--epochs", "4",
            "--batch-size", "16", "--lr", "0.003", "--out", "runs/att",
        ],
        root,
    );
    assert_success(&out, "train --seeds");
    assert!(root.join("runs/att/seed_1/manifest.json").exists());
    assert!(root.join("runs/att/seed_2/history.csv").exists());

    for seed in [1, 2] {
        let ckpt = format!("runs/att/seed_{seed}");
        let eval = format!("runs/att/seed_{seed}/eval.csv");
        let out = miml(
            &[
                "evaluate", "--checkpoint", &ckpt, "--data", "data", "--split", "test",
                "--out", &eval,
            ],
            root,
        );
        assert_success(&out, "evaluate");
        assert!(root.join(&eval).exists());
    }

    let out = miml(
        &[
            "report", "--runs", "runs/att/seed_1", "runs/att/seed_2", "--out", "summary.csv",
        ],
        root,
    );
    assert_success(&out, "report");
    let summary = fs::read_to_string(root.join("summary.csv")).unwrap();
    assert!(summary.starts_with("metric,min,q1,median,q3,max,mean"));
    assert_eq!(summary.lines().count(), 4, "three metric rows");

    // Attention export with SVG for one key present in the dataset.
    let out = miml(
        &[
            "attention", "--checkpoint", "runs/att/seed_1", "--data", "data", "--keys",
            "synth_000000,synth_000001", "--out", "attn", "--svg",
        ],
        root,
    );
    assert_success(&out, "attention");
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(root.join("attn/attention.json")).unwrap()).unwrap();
    assert_eq!(json["samples"].as_array().unwrap().len(), 2);
    assert!(root.join("attn/synth_000000.svg").exists());
    let svg = fs::read_to_string(root.join("attn/synth_000000.svg")).unwrap();
    assert_eq!(svg.matches("<rect").count(), 3 * 5);
}

#[test]
fn train_same_seed_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let spec = write_synth_spec(root, 40, 9);
    assert_success(
        &miml(&["synth", "--spec", spec.to_str().unwrap(), "--out", "data"], root),
        "synth",
    );
    for out_dir in ["run_a", "run_b"] {
        let out = miml(
            &[
                "train", "--data", "data", "--model", "fc_t", "--seed", "7", "--epochs", "3",
                "--batch-size", "16", "--out", out_dir,
            ],
            root,
        );
        assert_success(&out, "train");
    }
    let a = dir_bytes(&root.join("run_a"));
    let b = dir_bytes(&root.join("run_b"));
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert_eq!(ba, bb, "{na} differs across identical seeds");
    }
}

fn openmic_fixture(dir: &Path) {
    use miml_core::data::npy::{NpyArray, NpyData};
    use miml_core::data::npz::write_npz;

    let n = 8;
    let mut arrays = BTreeMap::new();
    arrays.insert(
        "X".to_string(),
        NpyArray {
            shape: vec![n, 2, 3],
            data: NpyData::U8((0..n * 6).map(|i| (i * 7 % 256) as u8).collect()),
        },
    );
    arrays.insert(
        "Y_true".to_string(),
        NpyArray {
            shape: vec![n, 2],
            data: NpyData::F32((0..n * 2).map(|i| (i % 3) as f32 / 2.0).collect()),
        },
    );
    arrays.insert(
        "Y_mask".to_string(),
        NpyArray {
            shape: vec![n, 2],
            data: NpyData::Bool((0..n * 2).map(|i| (i % 4 != 3) as u8).collect()),
        },
    );
    arrays.insert(
        "sample_key".to_string(),
        NpyArray {
            shape: vec![n],
            data: NpyData::Str((0..n).map(|i| format!("clip_{i:03}")).collect()),
        },
    );
    fs::write(dir.join("data.npz"), write_npz(&arrays).unwrap()).unwrap();
    let train_keys: Vec<String> = (0..6).map(|i| format!("clip_{i:03}")).collect();
    fs::write(dir.join("train.csv"), format!("sample_key\n{}\n", train_keys.join("\n"))).unwrap();
    fs::write(dir.join("test.csv"), "clip_006\nclip_007\n").unwrap();
    fs::write(dir.join("classmap.json"), r#"{"cello": 0, "drums": 1}"#).unwrap();
}

#[test]
fn convert_imports_npz_and_reports_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    openmic_fixture(root);
    let out = miml(
        &[
            "convert", "--npz", "data.npz", "--train-split", "train.csv", "--test-split",
            "test.csv", "--classmap", "classmap.json", "--out", "dataset",
        ],
        root,
    );
    assert_success(&out, "convert");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("N=8 L=2 R=2 D=3"), "{stdout}");
    assert!(stdout.contains("cello"), "{stdout}");
    let manifest = fs::read_to_string(root.join("dataset/manifest.json")).unwrap();
    assert!(manifest.contains("\"cello\""));

    // Missing classmap falls back to positional names with a warning.
    let out = miml(
        &[
            "convert", "--npz", "data.npz", "--train-split", "train.csv", "--test-split",
            "test.csv", "--out", "dataset2",
        ],
        root,
    );
    assert_success(&out, "convert without classmap");
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn corrupt_npz_exits_2_without_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    fs::write(root.join("broken.npz"), b"this is not a zip archive").unwrap();
    fs::write(root.join("train.csv"), "k0\n").unwrap();
    fs::write(root.join("test.csv"), "k1\n").unwrap();
    let out = miml(
        &[
            "convert", "--npz", "broken.npz", "--train-split", "train.csv", "--test-split",
            "test.csv", "--out", "dataset",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("broken.npz"), "names the offending file: {stderr}");
    assert!(!root.join("dataset").exists(), "partial output left behind");
}

#[test]
fn exit_codes_for_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    // Unknown flag.
    let out = miml(&["synth", "--bogus", "x"], root);
    assert_eq!(out.status.code(), Some(1));
    // No subcommand.
    let out = miml(&[], root);
    assert_eq!(out.status.code(), Some(1));
    // Help exits 0 and documents the config schema.
    let out = miml(&["--help"], root);
    assert_eq!(out.status.code(), Some(0));
    let out = miml(&["train", "--help"], root);
    assert_eq!(out.status.code(), Some(0));
    let help = String::from_utf8_lossy(&out.stdout);
    assert!(help.contains("batch_size"), "train --help documents the schema");
    // Conflicting seed flags.
    let out = miml(
        &[
            "train", "--data", "x", "--model", "att", "--seed", "1", "--seeds", "1,2",
            "--out", "y",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(1));
    // Invalid numeric flag value.
    let out = miml(
        &["train", "--data", "x", "--model", "att", "--lr", "0.0", "--out", "y"],
        root,
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn evaluate_missing_checkpoint_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = miml(
        &[
            "evaluate", "--checkpoint", "nowhere", "--data", "nowhere", "--out", "eval.csv",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}
