//! End-to-end training behavior: overfit sanity, bit determinism, the
//! multi-seed driver, and checkpoint/history side effects.

mod common;

use std::fs;
use std::path::Path;

use miml_core::data::{generate_synthetic, Split, SynthSpec};
use miml_core::model::{load_checkpoint, ModelKind};
use miml_core::rng::RngStream;
use miml_core::training::{run_seeds, train, TrainConfig};

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

/// A tiny fully separable set must be memorized: final train loss < 0.05.
#[test]
fn overfits_twenty_bags() {
    let spec = SynthSpec {
        n_bags: 25,
        n_labels: 3,
        bag_size: 5,
        feature_dim: 8,
        positives_per_bag: (1, 2),
        observe_rate: 1.0,
        noise_scale: 0.05,
        seed: 100,
        test_fraction: 0.2,
    };
    let (ds, _) = generate_synthetic(&spec).unwrap();
    // 20 train bags; carve 3 for validation, leaving 17 to memorize.
    let ds = ds
        .split_validation(0.15, &mut RngStream::from_seed(1))
        .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    // Full-batch, no dropout: nothing keeps the model from memorizing.
    let cfg = TrainConfig {
        batch_size: 32,
        lr: 1e-2,
        epochs: 200,
        seed: 4,
        dropout_rate: 0.0,
        checkpoint_dir: Some(tmp.path().join("run")),
        ..TrainConfig::default()
    };
    let outcome = train(ModelKind::Att, &ds, &cfg).unwrap();
    let final_loss = outcome.history.last().unwrap().train_loss;
    assert!(
        final_loss < 0.05,
        "failed to overfit: final train loss {final_loss}"
    );
}

#[test]
fn identical_seed_bit_identical_run() {
    let ds = common::small_synth(40, 7, 0.2);
    let t1 = tempfile::tempdir().unwrap();
    let t2 = tempfile::tempdir().unwrap();
    let mk = |dir: &Path| TrainConfig {
        batch_size: 16,
        lr: 2e-3,
        epochs: 6,
        seed: 11,
        dropout_rate: 0.4,
        checkpoint_dir: Some(dir.join("run")),
        ..TrainConfig::default()
    };
    let o1 = train(ModelKind::Att, &ds, &mk(t1.path())).unwrap();
    let o2 = train(ModelKind::Att, &ds, &mk(t2.path())).unwrap();
    assert_eq!(o1.history, o2.history);
    assert_eq!(o1.best_epoch, o2.best_epoch);
    let a = dir_bytes(&t1.path().join("run"));
    let b = dir_bytes(&t2.path().join("run"));
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert_eq!(ba, bb, "{na} differs between identical runs");
    }
}

#[test]
fn different_seeds_differ() {
    let ds = common::small_synth(40, 7, 0.2);
    let t1 = tempfile::tempdir().unwrap();
    let t2 = tempfile::tempdir().unwrap();
    let mk = |dir: &Path, seed: u64| TrainConfig {
        batch_size: 16,
        lr: 2e-3,
        epochs: 3,
        seed,
        checkpoint_dir: Some(dir.join("run")),
        ..TrainConfig::default()
    };
    let o1 = train(ModelKind::Att, &ds, &mk(t1.path(), 1)).unwrap();
    let o2 = train(ModelKind::Att, &ds, &mk(t2.path(), 2)).unwrap();
    assert_ne!(o1.history, o2.history);
}

/// Checkpointed validation loss is the minimum of the history sequence,
/// and the stored checkpoint reports exactly that epoch.
#[test]
fn checkpoint_tracks_best_epoch() {
    let ds = common::small_synth(40, 3, 0.2);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        lr: 3e-3,
        epochs: 10,
        seed: 2,
        checkpoint_dir: Some(tmp.path().join("run")),
        ..TrainConfig::default()
    };
    let outcome = train(ModelKind::FcT, &ds, &cfg).unwrap();
    let min_val = outcome
        .history
        .iter()
        .map(|r| r.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(outcome.best_val_loss, min_val);
    let (_, meta) = load_checkpoint(&outcome.checkpoint_dir).unwrap();
    assert_eq!(meta.epoch, outcome.best_epoch);
    assert_eq!(meta.val_loss, outcome.best_val_loss);
    assert_eq!(meta.seed, 2);

    // History CSV exists and has one row per epoch.
    let history = fs::read_to_string(outcome.checkpoint_dir.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 11);
    assert!(history.starts_with("epoch,train_loss,val_loss\n"));
}

#[test]
fn run_seeds_matches_individual_runs_and_rejects_duplicates() {
    let ds = common::small_synth(30, 5, 0.2);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        lr: 2e-3,
        epochs: 3,
        seed: 999, // overridden per run
        checkpoint_dir: Some(tmp.path().join("multi")),
        ..TrainConfig::default()
    };
    let outcomes = run_seeds(ModelKind::Att, &ds, &cfg, &[3, 1, 2]).unwrap();
    assert_eq!(outcomes.len(), 3);
    // Input order preserved.
    assert_eq!(outcomes[0].seed, 3);
    assert_eq!(outcomes[1].seed, 1);

    // Concurrent driver output equals a direct sequential train call.
    let solo_dir = tempfile::tempdir().unwrap();
    let solo_cfg = TrainConfig {
        seed: 1,
        checkpoint_dir: Some(solo_dir.path().join("run")),
        ..cfg.clone()
    };
    let solo = train(ModelKind::Att, &ds, &solo_cfg).unwrap();
    assert_eq!(solo.history, outcomes[1].history);
    let a = dir_bytes(&outcomes[1].checkpoint_dir);
    let b = dir_bytes(&solo.checkpoint_dir);
    for ((na, ba), (_, bb)) in a.iter().zip(&b) {
        assert_eq!(ba, bb, "{na} differs between solo and driver runs");
    }

    assert!(run_seeds(ModelKind::Att, &ds, &cfg, &[1, 1]).is_err());
    assert!(run_seeds(ModelKind::Att, &ds, &cfg, &[]).is_err());
}

#[test]
fn training_without_validation_split_errors() {
    let spec = SynthSpec {
        n_bags: 20,
        n_labels: 2,
        bag_size: 4,
        feature_dim: 6,
        positives_per_bag: (1, 1),
        observe_rate: 1.0,
        noise_scale: 0.05,
        seed: 8,
        test_fraction: 0.2,
    };
    let (ds, _) = generate_synthetic(&spec).unwrap();
    assert!(ds.indices_of(Split::Val).is_empty());
    let cfg = TrainConfig {
        epochs: 1,
        checkpoint_dir: Some(std::env::temp_dir().join("never-written")),
        ..TrainConfig::default()
    };
    let err = train(ModelKind::Att, &ds, &cfg).unwrap_err();
    assert!(err.to_string().contains("validation split is empty"));
}

/// Ten distinct seeds produce ten independent checkpoints.
#[test]
fn ten_seeds_ten_checkpoints() {
    let ds = common::small_synth(24, 15, 0.2);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        batch_size: 32,
        lr: 2e-3,
        epochs: 1,
        checkpoint_dir: Some(tmp.path().join("multi")),
        ..TrainConfig::default()
    };
    let seeds: Vec<u64> = (1..=10).collect();
    let outcomes = run_seeds(ModelKind::FcT, &ds, &cfg, &seeds).unwrap();
    assert_eq!(outcomes.len(), 10);
    for (o, seed) in outcomes.iter().zip(&seeds) {
        assert_eq!(o.seed, *seed);
        assert!(o.checkpoint_dir.join("manifest.json").exists());
    }
}
