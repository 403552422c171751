//! Bags, datasets, and split management.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// One weakly labeled example: a fixed-size set of feature instances plus a
/// bag-level label vector with an observation mask. `labels[l]` is only
/// meaningful where `mask[l]` is true.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub sample_key: String,
    /// Instance features, shape (bag_size x feature_dim), values in [0, 1].
    pub features: Tensor,
    pub labels: Vec<bool>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split {other:?}"))),
        }
    }
}

/// A collection of bags with a shared label vocabulary and a split
/// assignment per bag. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    bags: Vec<Bag>,
    splits: Vec<Split>,
    label_names: Vec<String>,
    provenance: String,
}

impl Dataset {
    /// Validates every structural invariant before accepting the data:
    /// unique keys, uniform dimensions, label/mask lengths, features in [0, 1].
    pub fn new(
        bags: Vec<Bag>,
        splits: Vec<Split>,
        label_names: Vec<String>,
        provenance: String,
    ) -> Result<Dataset> {
        if bags.is_empty() {
            return Err(Error::Data("dataset has no bags".into()));
        }
        if bags.len() != splits.len() {
            return Err(Error::Data(format!(
                "{} bags but {} split assignments",
                bags.len(),
                splits.len()
            )));
        }
        let l = label_names.len();
        let (r, d) = (bags[0].features.dim(0), bags[0].features.dim(1));
        let mut seen = HashMap::with_capacity(bags.len());
        for (i, bag) in bags.iter().enumerate() {
            if let Some(prev) = seen.insert(bag.sample_key.clone(), i) {
                return Err(Error::Data(format!(
                    "duplicate sample_key {:?} (bags {prev} and {i})",
                    bag.sample_key
                )));
            }
            if bag.features.rank() != 2 || bag.features.dim(0) != r || bag.features.dim(1) != d {
                return Err(Error::Data(format!(
                    "bag {:?} has features {:?}, expected ({r}, {d})",
                    bag.sample_key,
                    bag.features.shape()
                )));
            }
            if bag.labels.len() != l || bag.mask.len() != l {
                return Err(Error::Data(format!(
                    "bag {:?} has {} labels / {} mask entries for {l} label names",
                    bag.sample_key,
                    bag.labels.len(),
                    bag.mask.len()
                )));
            }
            for &v in bag.features.data() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Data(format!(
                        "bag {:?} has feature value {v} outside [0, 1]",
                        bag.sample_key
                    )));
                }
            }
        }
        Ok(Dataset {
            bags,
            splits,
            label_names,
            provenance,
        })
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn n_bags(&self) -> usize {
        self.bags.len()
    }

    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn bag_size(&self) -> usize {
        self.bags[0].features.dim(0)
    }

    pub fn feature_dim(&self) -> usize {
        self.bags[0].features.dim(1)
    }

    /// Bag indices assigned to `split`, in dataset order.
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.bags.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    pub fn index_of_key(&self, key: &str) -> Option<usize> {
        self.bags.iter().position(|b| b.sample_key == key)
    }

    /// Reassigns `floor(fraction * |train|)` uniformly sampled train bags to
    /// the validation split. Deterministic per rng seed; test is untouched.
    pub fn split_validation(&self, fraction: f64, rng: &mut RngStream) -> Result<Dataset> {
        if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
            return Err(Error::InvalidArg(format!(
                "validation fraction {fraction} outside (0, 1)"
            )));
        }
        let train_idx = self.indices_of(Split::Train);
        if train_idx.is_empty() {
            return Err(Error::Data("train split is empty".into()));
        }
        let k = (fraction * train_idx.len() as f64).floor() as usize;
        if k == 0 {
            return Err(Error::Data(format!(
                "fraction {fraction} of {} train bags yields an empty validation set",
                train_idx.len()
            )));
        }
        if k == train_idx.len() {
            return Err(Error::Data(format!(
                "fraction {fraction} would empty the train split"
            )));
        }
        let chosen = rng.sample_indices(train_idx.len(), k);
        let mut out = self.clone();
        for c in chosen {
            out.splits[train_idx[c]] = Split::Val;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset(n: usize) -> Dataset {
        let bags = (0..n)
            .map(|i| Bag {
                sample_key: format!("bag_{i:03}"),
                features: Tensor::filled(&[2, 3], 0.5),
                labels: vec![i % 2 == 0, false],
                mask: vec![true, i % 3 == 0],
            })
            .collect();
        Dataset::new(
            bags,
            vec![Split::Train; n],
            vec!["a".into(), "b".into()],
            "test".into(),
        )
        .unwrap()
    }

    #[test]
    fn duplicate_keys_rejected() {
        let mut bags = vec![
            Bag {
                sample_key: "x".into(),
                features: Tensor::filled(&[1, 2], 0.0),
                labels: vec![true],
                mask: vec![true],
            };
            2
        ];
        bags[1].labels = vec![false];
        let err = Dataset::new(
            bags,
            vec![Split::Train, Split::Test],
            vec!["l".into()],
            String::new(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn out_of_range_features_rejected() {
        let bags = vec![Bag {
            sample_key: "x".into(),
            features: Tensor::filled(&[1, 2], 1.5),
            labels: vec![true],
            mask: vec![true],
        }];
        assert!(Dataset::new(bags, vec![Split::Train], vec!["l".into()], String::new()).is_err());
    }

    #[test]
    fn validation_split_counts() {
        let ds = tiny_dataset(100);
        let mut rng = RngStream::from_seed(1);
        let split = ds.split_validation(0.15, &mut rng).unwrap();
        assert_eq!(split.indices_of(Split::Train).len(), 85);
        assert_eq!(split.indices_of(Split::Val).len(), 15);
        assert_eq!(split.indices_of(Split::Test).len(), 0);
    }

    #[test]
    fn validation_split_deterministic() {
        let ds = tiny_dataset(60);
        let a = ds
            .split_validation(0.2, &mut RngStream::from_seed(9))
            .unwrap();
        let b = ds
            .split_validation(0.2, &mut RngStream::from_seed(9))
            .unwrap();
        assert_eq!(a.splits(), b.splits());
        let c = ds
            .split_validation(0.2, &mut RngStream::from_seed(10))
            .unwrap();
        assert_ne!(a.splits(), c.splits());
    }

    #[test]
    fn validation_split_degenerate_fractions() {
        let ds = tiny_dataset(10);
        let mut rng = RngStream::from_seed(1);
        assert!(ds.split_validation(0.05, &mut rng).is_err()); // empty val
        assert!(ds.split_validation(0.0, &mut rng).is_err());
        assert!(ds.split_validation(1.0, &mut rng).is_err());
    }
}
