//! Forward passes.
//!
//! Instances are embedded per row over the flattened (batch x bag) axis, so
//! batch normalization sees all B*R instances jointly. The attention model
//! scores each instance per label, normalizes sigmoid attention activations
//! across a bag's instances (never softmax), and pools instance scores with
//! those weights. Mean pooling and the flattened baseline reuse the same
//! machinery.

use crate::error::{Error, Result};
use crate::layers::{
    batchnorm_forward_eval, batchnorm_forward_train, dropout, leaky_relu, relu, sigmoid,
    AffineLayer, BatchNormCache, Mode,
};
use crate::rng::RngStream;
use crate::tensor::Tensor;

use super::params::{Arch, EmbedStack, ModelParams, FC_LEAKY_SLOPE};

/// Tolerance on the per-(bag,label) attention weight sum; a violation means
/// an upstream bug, not a data problem.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    /// Input to the block's affine layer (N x D).
    pub input: Tensor,
    pub bn_cache: BatchNormCache,
    /// Batch-norm output, i.e. the relu input (N x D).
    pub bn_out: Tensor,
    pub drop_mask: Tensor,
}

#[derive(Debug, Clone)]
pub(crate) struct EmbedTrace {
    pub blocks: Vec<BlockCache>,
    pub h: Tensor,
}

#[derive(Debug, Clone)]
pub(crate) struct AttTrace {
    pub embed: EmbedTrace,
    /// Instance scores, post-sigmoid (N x L).
    pub f: Tensor,
    /// Attention activations, post-sigmoid (N x L).
    pub a: Tensor,
    /// Per-(bag,label) activation sums (B x L).
    pub a_sum: Tensor,
    /// Normalized attention weights (N x L).
    pub w: Tensor,
}

#[derive(Debug, Clone)]
pub(crate) struct FcTTrace {
    pub embed: EmbedTrace,
    pub f: Tensor,
    /// The uniform pooling weights actually used (N x L).
    pub w: Tensor,
}

#[derive(Debug, Clone)]
pub(crate) struct FcTrace {
    /// Input to each affine layer (the first is the flattened bag).
    pub inputs: Vec<Tensor>,
    /// Pre-activation outputs of the two hidden layers.
    pub pre_acts: Vec<Tensor>,
    pub drop_masks: Vec<Tensor>,
    /// Bag scores, post-sigmoid (B x L).
    pub s: Tensor,
}

#[derive(Debug, Clone)]
pub(crate) enum TraceDetail {
    Att(AttTrace),
    FcT(FcTTrace),
    Fc(FcTrace),
}

/// Cached activations of one train-mode forward pass; consumed by
/// [`ModelParams::backward`](super::ModelParams) and invalidated by any
/// parameter update.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub(crate) version: u64,
    pub(crate) batch: usize,
    pub(crate) bag_size: usize,
    pub(crate) detail: TraceDetail,
}

/// Outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Bag-level label probabilities (B x L).
    pub bag_scores: Tensor,
    /// Instance-level label probabilities (B x R x L); absent for the
    /// flattened baseline, which has no instance scores.
    pub instance_scores: Option<Tensor>,
    /// Pooling weights (B x R x L); uniform for mean pooling, absent for
    /// the flattened baseline.
    pub attention: Option<Tensor>,
    /// Present after train-mode passes only.
    pub trace: Option<ForwardTrace>,
}

fn check_input(x: &Tensor, feature_dim: usize) -> Result<(usize, usize)> {
    if x.rank() != 3 {
        return Err(Error::Shape(format!(
            "model input must be (batch, bag, features), got {:?}",
            x.shape()
        )));
    }
    if x.dim(2) != feature_dim {
        return Err(Error::Shape(format!(
            "model expects feature dim {feature_dim}, input has {}",
            x.dim(2)
        )));
    }
    if x.dim(0) == 0 || x.dim(1) == 0 {
        return Err(Error::InvalidArg("empty batch or empty bag".into()));
    }
    Ok((x.dim(0), x.dim(1)))
}

/// One embedding block in train mode: affine -> batch norm -> relu -> dropout.
fn block_train(
    block: &mut super::params::EmbedBlock,
    input: Tensor,
    dropout_rate: f64,
    rng: &mut RngStream,
) -> Result<(Tensor, BlockCache)> {
    let z = block.affine.forward(&input)?;
    let (bn_out, bn_cache) = batchnorm_forward_train(&z, &mut block.norm)?;
    let activated = relu(&bn_out);
    let (dropped, drop_mask) = dropout(&activated, dropout_rate, rng, Mode::Train)?;
    Ok((
        dropped,
        BlockCache {
            input,
            bn_cache,
            bn_out,
            drop_mask,
        },
    ))
}

fn block_eval(block: &super::params::EmbedBlock, input: &Tensor) -> Result<Tensor> {
    let z = block.affine.forward(input)?;
    let bn_out = batchnorm_forward_eval(&z, &block.norm)?;
    Ok(relu(&bn_out))
}

/// Train-mode embedding of (B*R) instances, with skip connection from the
/// raw input to the final embedding.
pub(crate) fn embed_train(
    embed: &mut EmbedStack,
    x_flat: Tensor,
    rng: &mut RngStream,
) -> Result<(Tensor, EmbedTrace)> {
    if x_flat.dim(0) < 2 {
        return Err(Error::InvalidArg(format!(
            "batch norm needs at least 2 instances in train mode, got {}",
            x_flat.dim(0)
        )));
    }
    let mut caches = Vec::with_capacity(embed.blocks.len());
    let mut cur = x_flat.clone();
    for block in &mut embed.blocks {
        let (next, cache) = block_train(block, cur, embed.dropout_rate, rng)?;
        caches.push(cache);
        cur = next;
    }
    let h = cur.add(&x_flat)?;
    h.ensure_finite("embedding")?;
    Ok((
        h.clone(),
        EmbedTrace { blocks: caches, h },
    ))
}

pub(crate) fn embed_eval(embed: &EmbedStack, x_flat: &Tensor) -> Result<Tensor> {
    let mut cur = x_flat.clone();
    for block in &embed.blocks {
        cur = block_eval(block, &cur)?;
    }
    let h = cur.add(x_flat)?;
    h.ensure_finite("embedding")?;
    Ok(h)
}

/// Instance-level label probabilities: sigmoid of the score head.
pub fn instance_scores(head: &AffineLayer, h: &Tensor) -> Result<Tensor> {
    Ok(sigmoid(&head.forward(h)?))
}

/// Attention weights: sigmoid activations divided by their
/// per-(bag,label) sum across the bag's instances (never softmax).
/// Returns (weights, activations, activation sums).
pub fn attention_weights(
    head: &AffineLayer,
    h: &Tensor,
    batch: usize,
    bag_size: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let a = sigmoid(&head.forward(h)?);
    let n_labels = a.dim(1);
    let mut a_sum = Tensor::zeros(&[batch, n_labels]);
    for b in 0..batch {
        for r in 0..bag_size {
            for l in 0..n_labels {
                let v = a.at2(b * bag_size + r, l);
                a_sum.set2(b, l, a_sum.at2(b, l) + v);
            }
        }
    }
    let mut w = Tensor::zeros(a.shape());
    for b in 0..batch {
        for r in 0..bag_size {
            for l in 0..n_labels {
                // sigma > 0 guarantees a strictly positive denominator
                w.set2(b * bag_size + r, l, a.at2(b * bag_size + r, l) / a_sum.at2(b, l));
            }
        }
    }
    Ok((w, a, a_sum))
}

/// Pools instance scores into bag scores with the given weights, verifying
/// that weights sum to one per (bag, label).
pub(crate) fn pool_flat(
    f: &Tensor,
    w: &Tensor,
    batch: usize,
    bag_size: usize,
) -> Result<Tensor> {
    if f.shape() != w.shape() {
        return Err(Error::Shape(format!(
            "scores {:?} vs weights {:?}",
            f.shape(),
            w.shape()
        )));
    }
    let n_labels = f.dim(1);
    let mut s = Tensor::zeros(&[batch, n_labels]);
    for b in 0..batch {
        for l in 0..n_labels {
            let mut weight_sum = 0.0;
            let mut score = 0.0;
            for r in 0..bag_size {
                let n = b * bag_size + r;
                weight_sum += w.at2(n, l);
                score += w.at2(n, l) * f.at2(n, l);
            }
            if (weight_sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(Error::Numerical(format!(
                    "pooling weights for bag {b}, label {l} sum to {weight_sum}, not 1"
                )));
            }
            s.set2(b, l, score);
        }
    }
    Ok(s)
}

/// Public 3-D pooling entry point: `f` and `w` shaped (B x R x L).
pub fn bag_scores(f: &Tensor, w: &Tensor) -> Result<Tensor> {
    if f.rank() != 3 {
        return Err(Error::Shape(format!(
            "bag_scores expects (B, R, L) tensors, got {:?}",
            f.shape()
        )));
    }
    let (b, r, l) = (f.dim(0), f.dim(1), f.dim(2));
    let f2 = f.clone().reshape(&[b * r, l])?;
    let w2 = w.clone().reshape(&[b * r, l])?;
    pool_flat(&f2, &w2, b, r)
}

/// Uniform pooling weights 1/R, shaped like the instance scores.
fn uniform_weights(batch: usize, bag_size: usize, n_labels: usize) -> Tensor {
    Tensor::filled(&[batch * bag_size, n_labels], 1.0 / bag_size as f64)
}

fn flatten_instances(x: &Tensor, batch: usize, bag_size: usize) -> Result<Tensor> {
    x.clone().reshape(&[batch * bag_size, x.dim(2)])
}

fn flatten_bags(x: &Tensor, batch: usize) -> Result<Tensor> {
    x.clone().reshape(&[batch, x.len() / batch])
}

fn unflatten(t: &Tensor, batch: usize, bag_size: usize) -> Result<Tensor> {
    t.clone().reshape(&[batch, bag_size, t.dim(1)])
}

impl ModelParams {
    /// Train-mode forward pass; returns a trace for the backward pass.
    /// Dropout draws are consumed from `rng` in row-major layer order.
    pub fn forward_train(&mut self, x: &Tensor, rng: &mut RngStream) -> Result<ForwardPass> {
        let (batch, bag_size) = check_input(x, self.feature_dim())?;
        let version = self.version();
        match &mut self.arch {
            Arch::Att(p) => {
                let x_flat = flatten_instances(x, batch, bag_size)?;
                let (h, embed) = embed_train(&mut p.embed, x_flat, rng)?;
                let f = instance_scores(&p.score_head, &h)?;
                let (w, a, a_sum) = attention_weights(&p.attn_head, &h, batch, bag_size)?;
                let s = pool_flat(&f, &w, batch, bag_size)?;
                Ok(ForwardPass {
                    bag_scores: s,
                    instance_scores: Some(unflatten(&f, batch, bag_size)?),
                    attention: Some(unflatten(&w, batch, bag_size)?),
                    trace: Some(ForwardTrace {
                        version,
                        batch,
                        bag_size,
                        detail: TraceDetail::Att(AttTrace { embed, f, a, a_sum, w }),
                    }),
                })
            }
            Arch::FcT(p) => {
                let x_flat = flatten_instances(x, batch, bag_size)?;
                let (h, embed) = embed_train(&mut p.embed, x_flat, rng)?;
                let f = instance_scores(&p.score_head, &h)?;
                let w = uniform_weights(batch, bag_size, p.n_labels);
                let s = pool_flat(&f, &w, batch, bag_size)?;
                Ok(ForwardPass {
                    bag_scores: s,
                    instance_scores: Some(unflatten(&f, batch, bag_size)?),
                    attention: Some(unflatten(&w, batch, bag_size)?),
                    trace: Some(ForwardTrace {
                        version,
                        batch,
                        bag_size,
                        detail: TraceDetail::FcT(FcTTrace { embed, f, w }),
                    }),
                })
            }
            Arch::Fc(p) => {
                if bag_size != p.bag_size {
                    return Err(Error::Shape(format!(
                        "flattened baseline was built for bag size {}, input has {bag_size}",
                        p.bag_size
                    )));
                }
                let mut inputs = Vec::with_capacity(3);
                let mut pre_acts = Vec::with_capacity(2);
                let mut drop_masks = Vec::with_capacity(2);
                let mut cur = flatten_bags(x, batch)?;
                for layer in &p.layers[..2] {
                    inputs.push(cur.clone());
                    let z = layer.forward(&cur)?;
                    let act = leaky_relu(&z, FC_LEAKY_SLOPE)?;
                    let (dropped, mask) = dropout(&act, p.dropout_rate, rng, Mode::Train)?;
                    pre_acts.push(z);
                    drop_masks.push(mask);
                    cur = dropped;
                }
                inputs.push(cur.clone());
                let s = sigmoid(&p.layers[2].forward(&cur)?);
                Ok(ForwardPass {
                    bag_scores: s.clone(),
                    instance_scores: None,
                    attention: None,
                    trace: Some(ForwardTrace {
                        version,
                        batch,
                        bag_size,
                        detail: TraceDetail::Fc(FcTrace {
                            inputs,
                            pre_acts,
                            drop_masks,
                            s,
                        }),
                    }),
                })
            }
        }
    }

    /// Eval-mode forward pass: no dropout, running batch-norm statistics,
    /// no trace. Accepts any bag size R >= 1 for instance-level models.
    pub fn forward_eval(&self, x: &Tensor) -> Result<ForwardPass> {
        let (batch, bag_size) = check_input(x, self.feature_dim())?;
        match &self.arch {
            Arch::Att(p) => {
                let x_flat = flatten_instances(x, batch, bag_size)?;
                let h = embed_eval(&p.embed, &x_flat)?;
                let f = instance_scores(&p.score_head, &h)?;
                let (w, _, _) = attention_weights(&p.attn_head, &h, batch, bag_size)?;
                let s = pool_flat(&f, &w, batch, bag_size)?;
                Ok(ForwardPass {
                    bag_scores: s,
                    instance_scores: Some(unflatten(&f, batch, bag_size)?),
                    attention: Some(unflatten(&w, batch, bag_size)?),
                    trace: None,
                })
            }
            Arch::FcT(p) => {
                let x_flat = flatten_instances(x, batch, bag_size)?;
                let h = embed_eval(&p.embed, &x_flat)?;
                let f = instance_scores(&p.score_head, &h)?;
                let w = uniform_weights(batch, bag_size, p.n_labels);
                let s = pool_flat(&f, &w, batch, bag_size)?;
                Ok(ForwardPass {
                    bag_scores: s,
                    instance_scores: Some(unflatten(&f, batch, bag_size)?),
                    attention: Some(unflatten(&w, batch, bag_size)?),
                    trace: None,
                })
            }
            Arch::Fc(p) => {
                if bag_size != p.bag_size {
                    return Err(Error::Shape(format!(
                        "flattened baseline was built for bag size {}, input has {bag_size}",
                        p.bag_size
                    )));
                }
                let x_flat = flatten_bags(x, batch)?;
                let mut cur = x_flat;
                for layer in &p.layers[..2] {
                    cur = leaky_relu(&layer.forward(&cur)?, FC_LEAKY_SLOPE)?;
                }
                let s = sigmoid(&p.layers[2].forward(&cur)?);
                Ok(ForwardPass {
                    bag_scores: s,
                    instance_scores: None,
                    attention: None,
                    trace: None,
                })
            }
        }
    }
}
