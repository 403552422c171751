//! The attention-pooled bag classifier and its baselines: parameters,
//! forward and backward passes, census, and checkpointing.

mod backward;
mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointInfo, CheckpointMeta, CHECKPOINT_FORMAT,
};
pub use forward::{
    attention_weights, bag_scores, instance_scores, ForwardPass, ForwardTrace,
    WEIGHT_SUM_TOLERANCE,
};
pub use params::{
    Arch, AttnParams, EmbedBlock, EmbedStack, FcParams, FcTParams, Gradients, ModelDims,
    ModelKind, ModelParams, DEFAULT_DROPOUT, FC_DEFAULT_HIDDEN, FC_LEAKY_SLOPE,
};
