//! Partial binary cross-entropy for bags with missing labels.
//!
//! Each bag's loss is the negative log-likelihood over its OBSERVED labels
//! only, rescaled by g(p_y) = alpha * p_y^gamma + beta where p_y is the
//! observed fraction. With the defaults (1, 0, -1) the rescaling cancels
//! the 1/L normalization down to a plain mean over observed labels, so a
//! bag with few annotations weighs the same as a fully annotated one. The
//! batch loss averages over bags that have at least one observed label;
//! fully unobserved bags contribute nothing to loss or gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped to this range before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Coefficients of the observed-fraction normalization g(p) = alpha * p^gamma + beta.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 1.0,
            beta: 0.0,
            gamma: -1.0,
        }
    }
}

impl LossConfig {
    pub fn g(&self, p_observed: f64) -> f64 {
        self.alpha * p_observed.powf(self.gamma) + self.beta
    }
}

/// Returns (loss, d loss / d scores). `labels` and `mask` are (B x L)
/// tensors of 0/1 values; unobserved entries are ignored entirely.
pub fn partial_bce(
    scores: &Tensor,
    labels: &Tensor,
    mask: &Tensor,
    cfg: &LossConfig,
) -> Result<(f64, Tensor)> {
    if scores.rank() != 2 || scores.shape() != labels.shape() || scores.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "partial_bce: scores {:?}, labels {:?}, mask {:?}",
            scores.shape(),
            labels.shape(),
            mask.shape()
        )));
    }
    let (batch, n_labels) = (scores.dim(0), scores.dim(1));
    let lo = PROB_CLAMP;
    let hi = 1.0 - PROB_CLAMP;

    // First pass: bags contributing at least one observed label.
    let mut contributing = 0usize;
    let mut observed_count = vec![0usize; batch];
    for (b, count) in observed_count.iter_mut().enumerate() {
        for l in 0..n_labels {
            if mask.at2(b, l) != 0.0 {
                *count += 1;
            }
        }
        if *count > 0 {
            contributing += 1;
        }
    }
    if contributing == 0 {
        return Err(Error::Data(
            "every label of every bag in the batch is unobserved; no training signal".into(),
        ));
    }

    let mut loss = 0.0;
    let mut grad = Tensor::zeros(scores.shape());
    let nf = contributing as f64;
    for (b, &count) in observed_count.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let p_obs = count as f64 / n_labels as f64;
        let g = cfg.g(p_obs);
        let mut bag_nll = 0.0;
        for l in 0..n_labels {
            if mask.at2(b, l) == 0.0 {
                continue;
            }
            let y = labels.at2(b, l);
            let q = scores.at2(b, l).clamp(lo, hi);
            bag_nll -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
            // Gradient of the clamped objective; saturated scores get zero.
            let s = scores.at2(b, l);
            if s > lo && s < hi {
                grad.set2(b, l, g / (n_labels as f64 * nf) * (q - y) / (q * (1.0 - q)));
            }
        }
        loss += g / n_labels as f64 * bag_nll;
    }
    loss /= nf;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("loss is {loss}")));
    }
    Ok((loss, grad))
}

/// Plain mean binary cross-entropy over every entry, for reference checks.
pub fn mean_bce(scores: &Tensor, labels: &Tensor) -> Result<f64> {
    let ones = Tensor::filled(scores.shape(), 1.0);
    let (loss, _) = partial_bce(
        scores,
        labels,
        &ones,
        &LossConfig {
            alpha: 0.0,
            beta: 1.0,
            gamma: 0.0,
        },
    )?;
    Ok(loss)
}
