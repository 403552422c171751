//! On-disk dataset interchange format.
//!
//! A dataset directory holds:
//!   manifest.json : counts, dimensions, label names, provenance
//!   features.npy  : (N x R x D) little-endian f32, C-order
//!   labels.csv    : sample_key,label_name,value; one row per OBSERVED
//!                    label only (absence of a row means unobserved)
//!   splits.csv    : sample_key,split; one row per bag, and the row order
//!                    defines the bag order of features.npy
//!
//! Feature values survive the f32 narrowing within 2^-24 relative error;
//! a second save/load round-trip is bit-identical to the first.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::dataset::{Bag, Dataset, Split};
use super::npy::{parse_npy, write_npy, NpyArray, NpyData};

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    n_bags: usize,
    n_labels: usize,
    bag_size: usize,
    feature_dim: usize,
    label_names: Vec<String>,
    provenance: String,
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        n_bags: dataset.n_bags(),
        n_labels: dataset.n_labels(),
        bag_size: dataset.bag_size(),
        feature_dim: dataset.feature_dim(),
        label_names: dataset.label_names().to_vec(),
        provenance: dataset.provenance().to_string(),
    };
    let mut manifest_json = serde_json::to_vec_pretty(&manifest)?;
    manifest_json.push(b'\n');
    fs::write(dir.join("manifest.json"), manifest_json)?;

    let mut feat = Vec::with_capacity(dataset.n_bags() * dataset.bag_size() * dataset.feature_dim());
    for bag in dataset.bags() {
        feat.extend(bag.features.data().iter().map(|&v| v as f32));
    }
    let npy = write_npy(&NpyArray {
        shape: vec![dataset.n_bags(), dataset.bag_size(), dataset.feature_dim()],
        data: NpyData::F32(feat),
    })?;
    fs::write(dir.join("features.npy"), npy)?;

    let mut labels = csv::Writer::from_path(dir.join("labels.csv"))?;
    labels.write_record(["sample_key", "label_name", "value"])?;
    for bag in dataset.bags() {
        for (l, name) in dataset.label_names().iter().enumerate() {
            if bag.mask[l] {
                labels.write_record([
                    bag.sample_key.as_str(),
                    name.as_str(),
                    if bag.labels[l] { "1" } else { "0" },
                ])?;
            }
        }
    }
    labels.flush()?;

    let mut splits = csv::Writer::from_path(dir.join("splits.csv"))?;
    splits.write_record(["sample_key", "split"])?;
    for (bag, split) in dataset.bags().iter().zip(dataset.splits()) {
        splits.write_record([bag.sample_key.as_str(), split.as_str()])?;
    }
    splits.flush()?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.label_names.len() != manifest.n_labels {
        return Err(Error::Data(format!(
            "manifest declares {} labels but names {}",
            manifest.n_labels,
            manifest.label_names.len()
        )));
    }

    let feats = parse_npy(&fs::read(dir.join("features.npy"))?)?;
    let expect = [manifest.n_bags, manifest.bag_size, manifest.feature_dim];
    if feats.shape != expect {
        return Err(Error::Data(format!(
            "features.npy has shape {:?}, manifest declares {expect:?}",
            feats.shape
        )));
    }
    if !matches!(feats.data, NpyData::F32(_)) {
        return Err(Error::Data(format!(
            "features.npy must be <f4, got {}",
            feats.descr()
        )));
    }
    let feat_f64 = feats.to_f64()?;

    // splits.csv fixes the bag order and the key list.
    let mut keys = Vec::with_capacity(manifest.n_bags);
    let mut splits = Vec::with_capacity(manifest.n_bags);
    let mut rdr = csv::Reader::from_path(dir.join("splits.csv"))?;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Data(format!("splits.csv row {rec:?} needs 2 fields")));
        }
        keys.push(rec[0].to_string());
        splits.push(Split::parse(&rec[1])?);
    }
    if keys.len() != manifest.n_bags {
        return Err(Error::Data(format!(
            "splits.csv lists {} bags, manifest declares {}",
            keys.len(),
            manifest.n_bags
        )));
    }

    let label_index: std::collections::HashMap<&str, usize> = manifest
        .label_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let key_index: std::collections::HashMap<&str, usize> = keys
        .iter()
        .enumerate()
        .map(|(i, k)| (k.as_str(), i))
        .collect();

    let l = manifest.n_labels;
    let mut labels = vec![vec![false; l]; manifest.n_bags];
    let mut mask = vec![vec![false; l]; manifest.n_bags];
    let mut rdr = csv::Reader::from_path(dir.join("labels.csv"))?;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Data(format!("labels.csv row {rec:?} needs 3 fields")));
        }
        let bag = *key_index
            .get(&rec[0])
            .ok_or_else(|| Error::Data(format!("labels.csv references unknown key {:?}", &rec[0])))?;
        let lab = *label_index.get(&rec[1]).ok_or_else(|| {
            Error::Data(format!("labels.csv references unknown label {:?}", &rec[1]))
        })?;
        let value: f64 = rec[2]
            .parse()
            .map_err(|_| Error::Data(format!("labels.csv bad value {:?}", &rec[2])))?;
        labels[bag][lab] = value != 0.0;
        mask[bag][lab] = true;
    }

    let stride = manifest.bag_size * manifest.feature_dim;
    let mut bags = Vec::with_capacity(manifest.n_bags);
    for (i, key) in keys.into_iter().enumerate() {
        bags.push(Bag {
            sample_key: key,
            features: Tensor::from_vec(
                &[manifest.bag_size, manifest.feature_dim],
                feat_f64[i * stride..(i + 1) * stride].to_vec(),
            )?,
            labels: std::mem::take(&mut labels[i]),
            mask: std::mem::take(&mut mask[i]),
        });
    }
    Dataset::new(bags, splits, manifest.label_names, manifest.provenance)
}
