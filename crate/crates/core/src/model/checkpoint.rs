//! Checkpoint directory format.
//!
//! `manifest.json` names the architecture, its dimensions and
//! hyperparameters, the training seed, the checkpointed epoch, its
//! validation loss, the parameter census, and the tensor list; each listed
//! tensor is one little-endian f32 NPY file next to the manifest. Values
//! round-trip bit-exactly at f32 precision.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

use super::params::{ModelDims, ModelKind, ModelParams};
use crate::data::npy::{parse_npy, tensor_to_npy_f32, NpyData};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub architecture: String,
    pub n_labels: usize,
    pub feature_dim: usize,
    pub bag_size: usize,
    pub hidden: Option<(usize, usize)>,
    pub dropout_rate: f64,
    pub seed: u64,
    pub epoch: usize,
    pub val_loss: f64,
    pub census: usize,
    pub tensors: Vec<String>,
}

pub const CHECKPOINT_FORMAT: &str = "miml-checkpoint-v1";

/// Training facts recorded alongside the tensors.
#[derive(Debug, Clone, Copy)]
pub struct CheckpointInfo {
    pub seed: u64,
    pub epoch: usize,
    pub val_loss: f64,
    /// Bag size of the training data (required to rebuild the flattened
    /// baseline, informational for instance-level models).
    pub bag_size: usize,
}

/// Writes a checkpoint atomically: the content lands in a temporary sibling
/// directory which is swapped into place, so a crash never leaves a
/// half-written checkpoint at `dir`.
pub fn save_checkpoint(dir: &Path, params: &ModelParams, info: &CheckpointInfo) -> Result<()> {
    let (hidden, bag_size) = match &params.arch {
        super::params::Arch::Fc(p) => (Some(p.hidden), p.bag_size),
        _ => (None, info.bag_size),
    };
    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT.to_string(),
        architecture: params.kind().as_str().to_string(),
        n_labels: params.n_labels(),
        feature_dim: params.feature_dim(),
        bag_size,
        hidden,
        dropout_rate: params.dropout_rate(),
        seed: info.seed,
        epoch: info.epoch,
        val_loss: info.val_loss,
        census: params.census(),
        tensors: params.state_tensors().iter().map(|(n, _)| n.clone()).collect(),
    };

    let parent = dir.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(
        ".{}.tmp",
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint".into())
    ));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;

    let mut manifest = serde_json::to_vec_pretty(&meta)?;
    manifest.push(b'\n');
    fs::write(tmp.join("manifest.json"), manifest)?;
    for (name, tensor) in params.state_tensors() {
        fs::write(tmp.join(format!("{name}.npy")), tensor_to_npy_f32(tensor)?)?;
    }

    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(Error::Data(format!(
            "unknown checkpoint format {:?}",
            meta.format
        )));
    }
    let kind = ModelKind::parse(&meta.architecture)?;
    let dims = ModelDims {
        feature_dim: meta.feature_dim,
        n_labels: meta.n_labels,
        bag_size: meta.bag_size,
    };
    // Construct with an arbitrary seed, then overwrite every tensor.
    let mut params = ModelParams::init(
        kind,
        dims,
        meta.dropout_rate,
        meta.hidden.unwrap_or(super::params::FC_DEFAULT_HIDDEN),
        &mut RngStream::from_seed(0),
    );

    let expected: Vec<String> = params.state_tensors().iter().map(|(n, _)| n.clone()).collect();
    if expected != meta.tensors {
        return Err(Error::Data(format!(
            "checkpoint tensor list {:?} does not match architecture {:?}",
            meta.tensors, meta.architecture
        )));
    }

    let mut loaded: Vec<(String, Tensor)> = Vec::with_capacity(meta.tensors.len());
    for name in &meta.tensors {
        let arr = parse_npy(&fs::read(dir.join(format!("{name}.npy")))?)?;
        if !matches!(arr.data, NpyData::F32(_)) {
            return Err(Error::Data(format!(
                "checkpoint tensor {name} must be <f4, got {}",
                arr.descr()
            )));
        }
        loaded.push((name.clone(), arr.to_tensor()?));
    }

    assign_tensors(&mut params, &loaded)?;
    if params.census() != meta.census {
        return Err(Error::Data(format!(
            "manifest census {} disagrees with rebuilt census {}",
            meta.census,
            params.census()
        )));
    }
    Ok((params, meta))
}

fn assign_tensors(params: &mut ModelParams, loaded: &[(String, Tensor)]) -> Result<()> {
    // Learnable tensors first.
    {
        let mut slots = params.learnable_mut();
        for (name, tensor) in loaded {
            if let Some((_, slot)) = slots.iter_mut().find(|(n, _)| n == name) {
                if slot.shape() != tensor.shape() {
                    return Err(Error::Data(format!(
                        "tensor {name} has shape {:?}, expected {:?}",
                        tensor.shape(),
                        slot.shape()
                    )));
                }
                **slot = tensor.clone();
            }
        }
    }
    // Then running statistics.
    let blocks = match &mut params.arch {
        super::params::Arch::Att(p) => Some(&mut p.embed.blocks),
        super::params::Arch::FcT(p) => Some(&mut p.embed.blocks),
        super::params::Arch::Fc(_) => None,
    };
    if let Some(blocks) = blocks {
        for (i, b) in blocks.iter_mut().enumerate() {
            let n = i + 1;
            for (suffix, slot) in [
                ("running_mean", &mut b.norm.running_mean),
                ("running_var", &mut b.norm.running_var),
            ] {
                let name = format!("block{n}.{suffix}");
                let (_, tensor) = loaded
                    .iter()
                    .find(|(ln, _)| *ln == name)
                    .ok_or_else(|| Error::Data(format!("checkpoint is missing {name}")))?;
                if slot.shape() != tensor.shape() {
                    return Err(Error::Data(format!(
                        "tensor {name} has shape {:?}, expected {:?}",
                        tensor.shape(),
                        slot.shape()
                    )));
                }
                *slot = tensor.clone();
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{ModelDims, ModelKind, DEFAULT_DROPOUT, FC_DEFAULT_HIDDEN};

    fn small_dims() -> ModelDims {
        ModelDims {
            feature_dim: 6,
            n_labels: 3,
            bag_size: 4,
        }
    }

    fn roundtrip(kind: ModelKind) {
        let mut rng = RngStream::from_seed(31);
        let params = ModelParams::init(kind, small_dims(), DEFAULT_DROPOUT, (8, 5), &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        let info = CheckpointInfo {
            seed: 31,
            epoch: 7,
            val_loss: 0.25,
            bag_size: 4,
        };
        save_checkpoint(&path, &params, &info).unwrap();
        let (back, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(meta.architecture, kind.as_str());
        assert_eq!(meta.epoch, 7);
        assert_eq!(meta.census, params.census());
        // f32 round-trip: loaded values equal the f32 narrowing exactly.
        for ((na, ta), (nb, tb)) in params.state_tensors().iter().zip(back.state_tensors()) {
            assert_eq!(*na, nb);
            for (x, y) in ta.data().iter().zip(tb.data()) {
                assert_eq!(*x as f32, *y as f32, "{na}");
                assert_eq!(*y, (*x as f32) as f64, "{na}");
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_all_architectures() {
        roundtrip(ModelKind::Att);
        roundtrip(ModelKind::FcT);
        roundtrip(ModelKind::Fc);
    }

    #[test]
    fn save_twice_is_byte_identical() {
        let mut rng = RngStream::from_seed(5);
        let params = ModelParams::init(
            ModelKind::Att,
            small_dims(),
            DEFAULT_DROPOUT,
            FC_DEFAULT_HIDDEN,
            &mut rng,
        );
        let info = CheckpointInfo {
            seed: 5,
            epoch: 1,
            val_loss: 1.5,
            bag_size: 4,
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let p1 = d1.path().join("ckpt");
        let p2 = d2.path().join("ckpt");
        save_checkpoint(&p1, &params, &info).unwrap();
        save_checkpoint(&p2, &params, &info).unwrap();
        for entry in fs::read_dir(&p1).unwrap() {
            let name = entry.unwrap().file_name();
            let a = fs::read(p1.join(&name)).unwrap();
            let b = fs::read(p2.join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs");
        }
    }

    #[test]
    fn corrupt_manifest_rejected() {
        let mut rng = RngStream::from_seed(5);
        let params = ModelParams::init(
            ModelKind::FcT,
            small_dims(),
            DEFAULT_DROPOUT,
            FC_DEFAULT_HIDDEN,
            &mut rng,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        save_checkpoint(
            &path,
            &params,
            &CheckpointInfo {
                seed: 0,
                epoch: 0,
                val_loss: 0.0,
                bag_size: 4,
            },
        )
        .unwrap();
        let manifest = path.join("manifest.json");
        let text = fs::read_to_string(&manifest).unwrap();
        fs::write(&manifest, text.replace("fc_t", "gru")).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
