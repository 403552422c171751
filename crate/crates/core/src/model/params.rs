//! Parameter containers for the attention model and the two baselines,
//! with seed-controlled initialization and the parameter census.

use crate::error::{Error, Result};
use crate::layers::{AffineLayer, BatchNormState};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Default dropout rate after each embedding layer.
pub const DEFAULT_DROPOUT: f64 = 0.6;
/// Negative slope of the flattened baseline's activation.
pub const FC_LEAKY_SLOPE: f64 = 0.01;
/// Default hidden widths of the flattened baseline.
pub const FC_DEFAULT_HIDDEN: (usize, usize) = (512, 512);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Attention-pooled instance scorer.
    Att,
    /// Same embedding and score head, mean pooling instead of attention.
    FcT,
    /// Flattened-input fully connected baseline.
    Fc,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Att => "att",
            ModelKind::FcT => "fc_t",
            ModelKind::Fc => "fc",
        }
    }

    pub fn parse(s: &str) -> Result<ModelKind> {
        match s {
            "att" => Ok(ModelKind::Att),
            "fc_t" => Ok(ModelKind::FcT),
            "fc" => Ok(ModelKind::Fc),
            other => Err(Error::InvalidArg(format!(
                "unknown model kind {other:?} (expected att, fc_t, or fc)"
            ))),
        }
    }
}

/// One embedding block: affine projection followed by batch normalization.
/// The activation and dropout that complete the block carry no parameters.
#[derive(Debug, Clone)]
pub struct EmbedBlock {
    pub affine: AffineLayer,
    pub norm: BatchNormState,
}

/// The shared three-block instance embedding. The hidden width equals the
/// feature dimension so the skip connection from the raw input lines up.
#[derive(Debug, Clone)]
pub struct EmbedStack {
    pub blocks: Vec<EmbedBlock>,
    pub feature_dim: usize,
    pub dropout_rate: f64,
}

impl EmbedStack {
    fn init(feature_dim: usize, dropout_rate: f64, rng: &mut RngStream) -> EmbedStack {
        let blocks = (0..3)
            .map(|_| EmbedBlock {
                affine: AffineLayer::init(feature_dim, feature_dim, rng),
                norm: BatchNormState::new(feature_dim),
            })
            .collect();
        EmbedStack {
            blocks,
            feature_dim,
            dropout_rate,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttnParams {
    pub embed: EmbedStack,
    pub score_head: AffineLayer,
    pub attn_head: AffineLayer,
    pub n_labels: usize,
}

#[derive(Debug, Clone)]
pub struct FcTParams {
    pub embed: EmbedStack,
    pub score_head: AffineLayer,
    pub n_labels: usize,
}

#[derive(Debug, Clone)]
pub struct FcParams {
    /// Input, hidden, and output affine layers over the flattened bag.
    pub layers: Vec<AffineLayer>,
    pub bag_size: usize,
    pub feature_dim: usize,
    pub n_labels: usize,
    pub hidden: (usize, usize),
    pub dropout_rate: f64,
}

#[derive(Debug, Clone)]
pub enum Arch {
    Att(AttnParams),
    FcT(FcTParams),
    Fc(FcParams),
}

/// All learnable tensors of one model plus its batch-norm running state.
///
/// `version` increments on every optimizer update; forward traces record
/// the version they were computed under so stale traces are rejected.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub arch: Arch,
    version: u64,
}

/// Shape description used when building a model for a dataset.
#[derive(Debug, Clone, Copy)]
pub struct ModelDims {
    pub feature_dim: usize,
    pub n_labels: usize,
    /// Instances per bag; only the flattened baseline depends on it.
    pub bag_size: usize,
}

impl ModelParams {
    /// Seed-controlled initialization. Identical seeds give identical
    /// parameters; ATT and FC_T draw their shared embedding and score head
    /// in the same order, so equal seeds produce equal shared tensors.
    pub fn init(
        kind: ModelKind,
        dims: ModelDims,
        dropout_rate: f64,
        fc_hidden: (usize, usize),
        rng: &mut RngStream,
    ) -> ModelParams {
        let arch = match kind {
            ModelKind::Att => {
                let embed = EmbedStack::init(dims.feature_dim, dropout_rate, rng);
                let score_head = AffineLayer::init(dims.feature_dim, dims.n_labels, rng);
                let attn_head = AffineLayer::init(dims.feature_dim, dims.n_labels, rng);
                Arch::Att(AttnParams {
                    embed,
                    score_head,
                    attn_head,
                    n_labels: dims.n_labels,
                })
            }
            ModelKind::FcT => {
                let embed = EmbedStack::init(dims.feature_dim, dropout_rate, rng);
                let score_head = AffineLayer::init(dims.feature_dim, dims.n_labels, rng);
                Arch::FcT(FcTParams {
                    embed,
                    score_head,
                    n_labels: dims.n_labels,
                })
            }
            ModelKind::Fc => {
                let input = dims.bag_size * dims.feature_dim;
                let (h1, h2) = fc_hidden;
                let layers = vec![
                    AffineLayer::init(input, h1, rng),
                    AffineLayer::init(h1, h2, rng),
                    AffineLayer::init(h2, dims.n_labels, rng),
                ];
                Arch::Fc(FcParams {
                    layers,
                    bag_size: dims.bag_size,
                    feature_dim: dims.feature_dim,
                    n_labels: dims.n_labels,
                    hidden: fc_hidden,
                    dropout_rate,
                })
            }
        };
        ModelParams { arch, version: 0 }
    }

    pub fn kind(&self) -> ModelKind {
        match &self.arch {
            Arch::Att(_) => ModelKind::Att,
            Arch::FcT(_) => ModelKind::FcT,
            Arch::Fc(_) => ModelKind::Fc,
        }
    }

    pub fn n_labels(&self) -> usize {
        match &self.arch {
            Arch::Att(p) => p.n_labels,
            Arch::FcT(p) => p.n_labels,
            Arch::Fc(p) => p.n_labels,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match &self.arch {
            Arch::Att(p) => p.embed.feature_dim,
            Arch::FcT(p) => p.embed.feature_dim,
            Arch::Fc(p) => p.feature_dim,
        }
    }

    pub fn dropout_rate(&self) -> f64 {
        match &self.arch {
            Arch::Att(p) => p.embed.dropout_rate,
            Arch::FcT(p) => p.embed.dropout_rate,
            Arch::Fc(p) => p.dropout_rate,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    /// Learnable tensors in canonical order, immutable.
    pub fn learnable(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        match &self.arch {
            Arch::Att(p) => {
                collect_embed(&p.embed, &mut out);
                collect_head("score", &p.score_head, &mut out);
                collect_head("attn", &p.attn_head, &mut out);
            }
            Arch::FcT(p) => {
                collect_embed(&p.embed, &mut out);
                collect_head("score", &p.score_head, &mut out);
            }
            Arch::Fc(p) => {
                for (i, layer) in p.layers.iter().enumerate() {
                    collect_head(&format!("fc{}", i + 1), layer, &mut out);
                }
            }
        }
        out
    }

    /// Learnable tensors in canonical order, mutable (for the optimizer).
    pub fn learnable_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        match &mut self.arch {
            Arch::Att(p) => {
                for (i, b) in p.embed.blocks.iter_mut().enumerate() {
                    let n = i + 1;
                    out.push((format!("block{n}.weight"), &mut b.affine.weight));
                    out.push((format!("block{n}.bias"), &mut b.affine.bias));
                    out.push((format!("block{n}.gamma"), &mut b.norm.gamma));
                    out.push((format!("block{n}.beta"), &mut b.norm.beta));
                }
                out.push(("score.weight".into(), &mut p.score_head.weight));
                out.push(("score.bias".into(), &mut p.score_head.bias));
                out.push(("attn.weight".into(), &mut p.attn_head.weight));
                out.push(("attn.bias".into(), &mut p.attn_head.bias));
            }
            Arch::FcT(p) => {
                for (i, b) in p.embed.blocks.iter_mut().enumerate() {
                    let n = i + 1;
                    out.push((format!("block{n}.weight"), &mut b.affine.weight));
                    out.push((format!("block{n}.bias"), &mut b.affine.bias));
                    out.push((format!("block{n}.gamma"), &mut b.norm.gamma));
                    out.push((format!("block{n}.beta"), &mut b.norm.beta));
                }
                out.push(("score.weight".into(), &mut p.score_head.weight));
                out.push(("score.bias".into(), &mut p.score_head.bias));
            }
            Arch::Fc(p) => {
                for (i, layer) in p.layers.iter_mut().enumerate() {
                    out.push((format!("fc{}.weight", i + 1), &mut layer.weight));
                    out.push((format!("fc{}.bias", i + 1), &mut layer.bias));
                }
            }
        }
        out
    }

    /// Everything a checkpoint stores: learnable tensors plus batch-norm
    /// running statistics, in canonical order.
    pub fn state_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.learnable();
        let blocks = match &self.arch {
            Arch::Att(p) => Some(&p.embed.blocks),
            Arch::FcT(p) => Some(&p.embed.blocks),
            Arch::Fc(_) => None,
        };
        if let Some(blocks) = blocks {
            for (i, b) in blocks.iter().enumerate() {
                let n = i + 1;
                out.push((format!("block{n}.running_mean"), &b.norm.running_mean));
                out.push((format!("block{n}.running_var"), &b.norm.running_var));
            }
        }
        out
    }

    /// Number of learnable scalars (running statistics excluded).
    pub fn census(&self) -> usize {
        self.learnable().iter().map(|(_, t)| t.len()).sum()
    }
}

fn collect_embed<'a>(embed: &'a EmbedStack, out: &mut Vec<(String, &'a Tensor)>) {
    for (i, b) in embed.blocks.iter().enumerate() {
        let n = i + 1;
        out.push((format!("block{n}.weight"), &b.affine.weight));
        out.push((format!("block{n}.bias"), &b.affine.bias));
        out.push((format!("block{n}.gamma"), &b.norm.gamma));
        out.push((format!("block{n}.beta"), &b.norm.beta));
    }
}

fn collect_head<'a>(name: &str, layer: &'a AffineLayer, out: &mut Vec<(String, &'a Tensor)>) {
    out.push((format!("{name}.weight"), &layer.weight));
    out.push((format!("{name}.bias"), &layer.bias));
}

/// Per-parameter gradients, aligned with [`ModelParams::learnable`] order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub by_name: Vec<(String, Tensor)>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}
