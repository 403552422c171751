//! The epoch loop and the multi-seed driver.
//!
//! One run is strictly sequential and bit-deterministic per
//! (seed, dataset, config): the run seed feeds three derived streams, in
//! order, for parameter initialization, epoch shuffling, and dropout.
//! Validation loss is computed in eval mode after every epoch; the model is
//! checkpointed whenever it strictly improves (ties keep the earlier
//! epoch). Bags whose labels are all unobserved carry no signal and are
//! skipped by the loss; batches made up entirely of such bags are skipped
//! whole. The final partial batch of an epoch is trained on, not dropped.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{
    save_checkpoint, CheckpointInfo, ModelDims, ModelKind, ModelParams,
};
use crate::rng::RngStream;
use crate::tensor::Tensor;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::config::TrainConfig;
use super::loss::partial_bce;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochRecord>,
    pub checkpoint_dir: PathBuf,
}

/// Assembles (features, labels, mask) batch tensors for the given bags.
pub fn batch_tensors(dataset: &Dataset, indices: &[usize]) -> (Tensor, Tensor, Tensor) {
    let (b, r, d, l) = (
        indices.len(),
        dataset.bag_size(),
        dataset.feature_dim(),
        dataset.n_labels(),
    );
    let mut x = Vec::with_capacity(b * r * d);
    let mut y = Vec::with_capacity(b * l);
    let mut m = Vec::with_capacity(b * l);
    for &i in indices {
        let bag = &dataset.bags()[i];
        x.extend_from_slice(bag.features.data());
        y.extend(bag.labels.iter().map(|&v| f64::from(v)));
        m.extend(bag.mask.iter().map(|&v| f64::from(v)));
    }
    (
        Tensor::from_vec(&[b, r, d], x).expect("sized above"),
        Tensor::from_vec(&[b, l], y).expect("sized above"),
        Tensor::from_vec(&[b, l], m).expect("sized above"),
    )
}

fn contributing_bags(mask: &Tensor) -> usize {
    (0..mask.dim(0))
        .filter(|&b| (0..mask.dim(1)).any(|l| mask.at2(b, l) != 0.0))
        .count()
}

/// Mean per-bag partial BCE over a split in eval mode.
fn eval_split_loss(
    params: &ModelParams,
    dataset: &Dataset,
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut weighted = 0.0;
    let mut total = 0usize;
    for chunk in indices.chunks(cfg.batch_size) {
        let (x, y, m) = batch_tensors(dataset, chunk);
        let n = contributing_bags(&m);
        if n == 0 {
            continue;
        }
        let pass = params.forward_eval(&x)?;
        let (loss, _) = partial_bce(&pass.bag_scores, &y, &m, &cfg.loss)?;
        weighted += loss * n as f64;
        total += n;
    }
    if total == 0 {
        return Err(Error::Data(
            "validation split has no observed labels to score".into(),
        ));
    }
    Ok(weighted / total as f64)
}

fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for rec in history {
        out.push_str(&format!("{},{},{}\n", rec.epoch, rec.train_loss, rec.val_loss));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Trains one model and checkpoints the best-validation epoch into
/// `cfg.checkpoint_dir`, alongside `history.csv`.
pub fn train(kind: ModelKind, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let out_dir = cfg
        .checkpoint_dir
        .clone()
        .ok_or_else(|| Error::InvalidArg("checkpoint_dir is required to train".into()))?;

    let mut train_idx = dataset.indices_of(Split::Train);
    let val_idx = dataset.indices_of(Split::Val);
    if train_idx.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    if val_idx.is_empty() {
        return Err(Error::Data(
            "validation split is empty; carve one before training".into(),
        ));
    }

    let dims = ModelDims {
        feature_dim: dataset.feature_dim(),
        n_labels: dataset.n_labels(),
        bag_size: dataset.bag_size(),
    };
    let mut master = RngStream::from_seed(cfg.seed);
    let mut init_rng = master.split();
    let mut shuffle_rng = master.split();
    let mut dropout_rng = master.split();

    let mut params = ModelParams::init(kind, dims, cfg.dropout_rate, cfg.fc_hidden, &mut init_rng);
    let mut adam = AdamState::new(&params);
    let adam_cfg = AdamConfig::with_lr(cfg.lr);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut train_idx);
        let mut weighted = 0.0;
        let mut total = 0usize;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let (x, y, m) = batch_tensors(dataset, chunk);
            let n = contributing_bags(&m);
            if n == 0 {
                continue;
            }
            let pass = params.forward_train(&x, &mut dropout_rng)?;
            let trace = pass.trace.expect("train-mode forward returns a trace");
            let (loss, grad_s) = partial_bce(&pass.bag_scores, &y, &m, &cfg.loss)?;
            let grads = params.backward(&trace, &grad_s)?;
            adam_step(&mut adam, &mut params, &grads, &adam_cfg)?;
            weighted += loss * n as f64;
            total += n;
        }
        if total == 0 {
            return Err(Error::Data(
                "train split has no observed labels; nothing to learn from".into(),
            ));
        }
        let train_loss = weighted / total as f64;
        let val_loss = eval_split_loss(&params, dataset, &val_idx, cfg)?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "validation loss became {val_loss} at epoch {epoch}"
            )));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            save_checkpoint(
                &out_dir,
                &params,
                &CheckpointInfo {
                    seed: cfg.seed,
                    epoch,
                    val_loss,
                    bag_size: dims.bag_size,
                },
            )?;
        }
    }

    write_history(&out_dir.join("history.csv"), &history)?;
    Ok(TrainOutcome {
        seed: cfg.seed,
        best_epoch,
        best_val_loss: best_val,
        history,
        checkpoint_dir: out_dir,
    })
}

/// Independent training runs, one per seed, fanned out across threads
/// (there is no shared mutable state, so concurrent and sequential
/// execution produce identical results). Per-seed checkpoints land in
/// `<checkpoint_dir>/seed_<seed>`; outcomes come back in input order.
pub fn run_seeds(
    kind: ModelKind,
    dataset: &Dataset,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<TrainOutcome>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArg("no seeds given".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Error::InvalidArg("duplicate seeds".into()));
    }
    let base = cfg
        .checkpoint_dir
        .clone()
        .ok_or_else(|| Error::InvalidArg("checkpoint_dir is required to train".into()))?;

    let outcomes: Vec<Result<TrainOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let mut run_cfg = cfg.clone();
                run_cfg.seed = seed;
                run_cfg.checkpoint_dir = Some(base.join(format!("seed_{seed}")));
                scope.spawn(move || train(kind, dataset, &run_cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("training thread panicked".into()))))
            .collect()
    });
    outcomes.into_iter().collect()
}
