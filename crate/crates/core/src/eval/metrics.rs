//! Two-level macro metrics over observed labels.
//!
//! Positive and negative class precision/recall/F1 are computed separately
//! per label, then averaged into the per-label (instrument-wise) metric, so
//! the majority class cannot dominate an imbalanced label. Any 0/0 ratio
//! yields 0 with a warning, never 1. Unobserved (bag, label) entries are
//! excluded from the counts entirely.

use crate::tensor::Tensor;

/// Per-label confusion counts over observed entries only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn observed(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.true_pos += 1,
            (false, true) => self.false_pos += 1,
            (false, false) => self.true_neg += 1,
            (true, false) => self.false_neg += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricClass {
    Positive,
    Negative,
}

/// 0-on-0/0 division with a stderr warning.
fn ratio(num: u64, denom: u64, what: &str) -> f64 {
    if denom == 0 {
        eprintln!("warning: {what} is 0/0, reporting 0");
        0.0
    } else {
        num as f64 / denom as f64
    }
}

/// Precision/recall/F1 of one class of one label's confusion counts.
pub fn class_prf(counts: &ConfusionCounts, class: MetricClass) -> Prf {
    let (p, r) = match class {
        MetricClass::Positive => (
            ratio(counts.true_pos, counts.true_pos + counts.false_pos, "positive precision"),
            ratio(counts.true_pos, counts.true_pos + counts.false_neg, "positive recall"),
        ),
        MetricClass::Negative => (
            ratio(counts.true_neg, counts.true_neg + counts.false_neg, "negative precision"),
            ratio(counts.true_neg, counts.true_neg + counts.false_pos, "negative recall"),
        ),
    };
    let f1 = if p + r == 0.0 {
        eprintln!("warning: F1 is 0/0, reporting 0");
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    Prf {
        precision: p,
        recall: r,
        f1,
    }
}

/// Instrument-wise metric: unweighted mean of the positive and negative
/// class metrics, so both classes count equally.
pub fn instrument_metrics(counts: &ConfusionCounts) -> Prf {
    let pos = class_prf(counts, MetricClass::Positive);
    let neg = class_prf(counts, MetricClass::Negative);
    Prf {
        precision: (pos.precision + neg.precision) / 2.0,
        recall: (pos.recall + neg.recall) / 2.0,
        f1: (pos.f1 + neg.f1) / 2.0,
    }
}

/// Thresholds scores into binary predictions; strictly greater than the
/// threshold is positive, so a score of exactly 0.5 predicts negative.
pub fn binarize(scores: &Tensor, threshold: f64) -> Vec<bool> {
    scores.data().iter().map(|&s| s > threshold).collect()
}
