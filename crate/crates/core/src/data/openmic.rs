//! OpenMIC NPZ importer.
//!
//! Expects the released container layout: arrays `X` (N x R x D features,
//! 8-bit or float), `Y_true` (N x L relevance), `Y_mask` (N x L observation
//! flags), and `sample_key` (N strings), plus one key list per released
//! split. 8-bit features are normalized to [0, 1] by dividing by 255; float
//! features are clamped into [0, 1]. A label is positive iff its relevance
//! exceeds 0.5 where the mask is set.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::dataset::{Bag, Dataset, Split};
use super::npy::{NpyArray, NpyData};
use super::npz::parse_npz;

/// Relevance above this counts as a positive label (strictly greater,
/// symmetric with the prediction threshold used in evaluation).
const RELEVANCE_THRESHOLD: f64 = 0.5;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn read_key_list(path: &Path) -> Result<Vec<String>> {
    let text = String::from_utf8(read_file(path)?)
        .map_err(|e| Error::Data(format!("{}: not UTF-8: {e}", path.display())))?;
    let mut keys = Vec::new();
    for line in text.lines() {
        let key = line.trim().trim_matches(',');
        if key.is_empty() || key == "sample_key" {
            continue; // blank line or optional header
        }
        keys.push(key.to_string());
    }
    if keys.is_empty() {
        return Err(Error::Data(format!("split file {path:?} lists no keys")));
    }
    Ok(keys)
}

/// Label vocabulary from a class-map JSON (`name -> column index`), or
/// positional names when no class map is given.
fn label_names(classmap: Option<&Path>, n_labels: usize) -> Result<Vec<String>> {
    match classmap {
        Some(path) => {
            let map: BTreeMap<String, usize> = serde_json::from_slice(&read_file(path)?)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let mut names = vec![String::new(); n_labels];
            for (name, idx) in map {
                if idx >= n_labels {
                    return Err(Error::Data(format!(
                        "class map assigns {name:?} to column {idx}, but arrays have {n_labels} labels"
                    )));
                }
                if !names[idx].is_empty() {
                    return Err(Error::Data(format!(
                        "class map assigns two names to column {idx}"
                    )));
                }
                names[idx] = name;
            }
            if let Some(hole) = names.iter().position(|n| n.is_empty()) {
                return Err(Error::Data(format!("class map leaves column {hole} unnamed")));
            }
            Ok(names)
        }
        None => {
            eprintln!(
                "warning: no class map given; using positional label names label_00..label_{:02}",
                n_labels - 1
            );
            Ok((0..n_labels).map(|l| format!("label_{l:02}")).collect())
        }
    }
}

fn normalized_features(x: &NpyArray) -> Result<Vec<f64>> {
    Ok(match &x.data {
        NpyData::U8(v) => v.iter().map(|&b| b as f64 / 255.0).collect(),
        NpyData::F32(_) | NpyData::F64(_) => {
            x.to_f64()?.iter().map(|v| v.clamp(0.0, 1.0)).collect()
        }
        other => {
            return Err(Error::Data(format!(
                "X must be |u1 or float, got {:?}",
                match other {
                    NpyData::Bool(_) => "|b1",
                    NpyData::I64(_) => "<i8",
                    _ => "string",
                }
            )))
        }
    })
}

pub fn import_openmic(
    npz_path: &Path,
    train_split_csv: &Path,
    test_split_csv: &Path,
    classmap: Option<&Path>,
) -> Result<Dataset> {
    let arrays = parse_npz(&read_file(npz_path)?)
        .map_err(|e| Error::Data(format!("{}: {e}", npz_path.display())))?;
    let fetch = |name: &str| {
        arrays
            .get(name)
            .ok_or_else(|| Error::Data(format!("NPZ is missing array {name:?}")))
    };
    let x = fetch("X")?;
    let y_true = fetch("Y_true")?;
    let y_mask = fetch("Y_mask")?;
    let sample_key = fetch("sample_key")?;

    if x.shape.len() != 3 {
        return Err(Error::Data(format!("X must be N x R x D, got {:?}", x.shape)));
    }
    let (n, r, d) = (x.shape[0], x.shape[1], x.shape[2]);
    if y_true.shape.len() != 2 || y_true.shape[0] != n {
        return Err(Error::Data(format!(
            "Y_true shape {:?} disagrees with X ({n} bags)",
            y_true.shape
        )));
    }
    let l = y_true.shape[1];
    if y_mask.shape != y_true.shape {
        return Err(Error::Data(format!(
            "Y_mask shape {:?} disagrees with Y_true {:?}",
            y_mask.shape, y_true.shape
        )));
    }
    if sample_key.shape != vec![n] {
        return Err(Error::Data(format!(
            "sample_key shape {:?} disagrees with X ({n} bags)",
            sample_key.shape
        )));
    }
    let keys = match &sample_key.data {
        NpyData::Str(v) => v.clone(),
        _ => return Err(Error::Data("sample_key must be a string array".into())),
    };

    let feats = normalized_features(x)?;
    let rel = y_true.to_f64()?;
    let mask_raw = y_mask.to_f64()?;

    let train_keys: HashSet<String> = read_key_list(train_split_csv)?.into_iter().collect();
    let test_keys: HashSet<String> = read_key_list(test_split_csv)?.into_iter().collect();
    if let Some(both) = train_keys.intersection(&test_keys).next() {
        return Err(Error::Data(format!(
            "sample key {both:?} appears in both split files"
        )));
    }

    let names = label_names(classmap, l)?;
    let stride = r * d;
    let mut bags = Vec::with_capacity(n);
    let mut splits = Vec::with_capacity(n);
    for (i, key) in keys.into_iter().enumerate() {
        let split = if train_keys.contains(&key) {
            Split::Train
        } else if test_keys.contains(&key) {
            Split::Test
        } else {
            return Err(Error::Data(format!(
                "sample key {key:?} is missing from both split files"
            )));
        };
        let mut labels = vec![false; l];
        let mut mask = vec![false; l];
        for j in 0..l {
            if mask_raw[i * l + j] != 0.0 {
                mask[j] = true;
                labels[j] = rel[i * l + j] > RELEVANCE_THRESHOLD;
            }
        }
        bags.push(Bag {
            sample_key: key,
            features: Tensor::from_vec(&[r, d], feats[i * stride..(i + 1) * stride].to_vec())?,
            labels,
            mask,
        });
        splits.push(split);
    }

    Dataset::new(
        bags,
        splits,
        names,
        format!("openmic import of {}", npz_path.display()),
    )
}

/// Per-label observed counts, handy for import summaries.
pub fn observed_counts(dataset: &Dataset) -> Vec<(String, usize, usize)> {
    let l = dataset.n_labels();
    let mut out = Vec::with_capacity(l);
    for (j, name) in dataset.label_names().iter().enumerate() {
        let observed = dataset.bags().iter().filter(|b| b.mask[j]).count();
        let positive = dataset
            .bags()
            .iter()
            .filter(|b| b.mask[j] && b.labels[j])
            .count();
        out.push((name.clone(), observed, positive));
    }
    out
}
