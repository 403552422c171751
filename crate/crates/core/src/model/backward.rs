//! Exact analytic backward passes, hand-derived per layer.
//!
//! The attention path differentiates the normalized weights with the
//! quotient rule (the gradient of w = a / sum(a) couples every instance of
//! a bag), and the skip connection passes the embedding gradient straight
//! to the third block's output. Gradients are returned in the same
//! canonical order as [`ModelParams::learnable`].

use crate::error::{Error, Result};
use crate::layers::{batchnorm_backward, leaky_relu_backward, relu_backward};
use crate::tensor::Tensor;

use super::forward::{EmbedTrace, ForwardTrace, TraceDetail};
use super::params::{Arch, EmbedStack, Gradients, ModelParams, FC_LEAKY_SLOPE};

/// d(sigmoid)/dz expressed through the sigmoid output y: y * (1 - y).
fn sigmoid_backward(grad_out: &Tensor, y: &Tensor) -> Result<Tensor> {
    grad_out.zip_map(y, |g, v| g * v * (1.0 - v))
}

/// Spreads a (B x L) bag gradient over instances, scaling by per-instance
/// weights: out[n, l] = grad[b, l] * scale[n, l] with b = n / bag_size.
fn spread_over_instances(
    grad_bag: &Tensor,
    scale: &Tensor,
    bag_size: usize,
) -> Result<Tensor> {
    let n_labels = grad_bag.dim(1);
    let mut out = Tensor::zeros(scale.shape());
    for n in 0..scale.dim(0) {
        let b = n / bag_size;
        for l in 0..n_labels {
            out.set2(n, l, grad_bag.at2(b, l) * scale.at2(n, l));
        }
    }
    Ok(out)
}

/// Backward through the three-block embedding; pushes per-block parameter
/// gradients (deepest block first, reversed at the end to canonical order).
fn embed_backward(
    embed: &EmbedStack,
    trace: &EmbedTrace,
    grad_h: &Tensor,
) -> Result<Vec<(String, Tensor)>> {
    let mut grads_rev: Vec<(String, Tensor)> = Vec::with_capacity(12);
    let mut g = grad_h.clone();
    for (i, (block, cache)) in embed
        .blocks
        .iter()
        .zip(&trace.blocks)
        .enumerate()
        .rev()
    {
        let n = i + 1;
        g = g.mul_elem(&cache.drop_mask)?;
        g = relu_backward(&g, &cache.bn_out)?;
        let (gx, g_gamma, g_beta) = batchnorm_backward(&g, &cache.bn_cache, &block.norm)?;
        let (g_in, g_w, g_b) = block.affine.backward(&cache.input, &gx)?;
        grads_rev.push((format!("block{n}.beta"), g_beta));
        grads_rev.push((format!("block{n}.gamma"), g_gamma));
        grads_rev.push((format!("block{n}.bias"), g_b));
        grads_rev.push((format!("block{n}.weight"), g_w));
        g = g_in;
    }
    grads_rev.reverse();
    Ok(grads_rev)
}

impl ModelParams {
    /// Exact parameter gradients of the bag scores under `grad_bag_scores`
    /// (B x L), using the cached activations of a train-mode forward pass.
    pub fn backward(&self, trace: &ForwardTrace, grad_bag_scores: &Tensor) -> Result<Gradients> {
        if trace.version != self.version() {
            return Err(Error::InvalidArg(format!(
                "stale forward trace: parameters were updated (trace version {}, current {})",
                trace.version,
                self.version()
            )));
        }
        if grad_bag_scores.rank() != 2
            || grad_bag_scores.dim(0) != trace.batch
            || grad_bag_scores.dim(1) != self.n_labels()
        {
            return Err(Error::Shape(format!(
                "bag-score gradient {:?} does not match batch {} x labels {}",
                grad_bag_scores.shape(),
                trace.batch,
                self.n_labels()
            )));
        }
        let bag_size = trace.bag_size;

        match (&self.arch, &trace.detail) {
            (Arch::Att(p), TraceDetail::Att(t)) => {
                // dS/df = w, dS/dw = f
                let grad_f = spread_over_instances(grad_bag_scores, &t.w, bag_size)?;
                let grad_w = spread_over_instances(grad_bag_scores, &t.f, bag_size)?;

                // Quotient rule through w = a / sum(a) per (bag, label):
                // grad_a[r] = (grad_w[r] - sum_r' grad_w[r'] w[r']) / sum(a).
                let n_labels = p.n_labels;
                let mut grad_a = Tensor::zeros(t.a.shape());
                for b in 0..trace.batch {
                    for l in 0..n_labels {
                        let mut dot = 0.0;
                        for r in 0..bag_size {
                            let n = b * bag_size + r;
                            dot += grad_w.at2(n, l) * t.w.at2(n, l);
                        }
                        let denom = t.a_sum.at2(b, l);
                        for r in 0..bag_size {
                            let n = b * bag_size + r;
                            grad_a.set2(n, l, (grad_w.at2(n, l) - dot) / denom);
                        }
                    }
                }

                let grad_zs = sigmoid_backward(&grad_f, &t.f)?;
                let grad_za = sigmoid_backward(&grad_a, &t.a)?;
                let (gh_score, g_ws, g_bs) = p.score_head.backward(&t.embed.h, &grad_zs)?;
                let (gh_attn, g_wa, g_ba) = p.attn_head.backward(&t.embed.h, &grad_za)?;
                let grad_h = gh_score.add(&gh_attn)?;

                let mut by_name = embed_backward(&p.embed, &t.embed, &grad_h)?;
                by_name.push(("score.weight".into(), g_ws));
                by_name.push(("score.bias".into(), g_bs));
                by_name.push(("attn.weight".into(), g_wa));
                by_name.push(("attn.bias".into(), g_ba));
                Ok(Gradients { by_name })
            }
            (Arch::FcT(p), TraceDetail::FcT(t)) => {
                let grad_f = spread_over_instances(grad_bag_scores, &t.w, bag_size)?;
                let grad_zs = sigmoid_backward(&grad_f, &t.f)?;
                let (grad_h, g_ws, g_bs) = p.score_head.backward(&t.embed.h, &grad_zs)?;
                let mut by_name = embed_backward(&p.embed, &t.embed, &grad_h)?;
                by_name.push(("score.weight".into(), g_ws));
                by_name.push(("score.bias".into(), g_bs));
                Ok(Gradients { by_name })
            }
            (Arch::Fc(p), TraceDetail::Fc(t)) => {
                let grad_z3 = sigmoid_backward(grad_bag_scores, &t.s)?;
                let (mut g, g_w3, g_b3) = p.layers[2].backward(&t.inputs[2], &grad_z3)?;
                // Built deepest-first, reversed to canonical order below.
                let mut by_name: Vec<(String, Tensor)> = Vec::with_capacity(6);
                by_name.push(("fc3.bias".into(), g_b3));
                by_name.push(("fc3.weight".into(), g_w3));
                for i in (0..2).rev() {
                    g = g.mul_elem(&t.drop_masks[i])?;
                    g = leaky_relu_backward(&g, &t.pre_acts[i], FC_LEAKY_SLOPE)?;
                    let (g_in, g_w, g_b) = p.layers[i].backward(&t.inputs[i], &g)?;
                    by_name.push((format!("fc{}.bias", i + 1), g_b));
                    by_name.push((format!("fc{}.weight", i + 1), g_w));
                    g = g_in;
                }
                by_name.reverse();
                Ok(Gradients { by_name })
            }
            _ => Err(Error::InvalidArg(
                "forward trace does not belong to this architecture".into(),
            )),
        }
    }
}
