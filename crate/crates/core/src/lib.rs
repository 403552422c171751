//! Multi-instance multi-label (MIML) classification engine.
//!
//! Bags of fixed-dimension feature instances carry weak, possibly missing,
//! bag-level labels. An attention-pooled classifier scores each instance per
//! label and aggregates instance scores with learned, normalized attention
//! weights; mean-pooled and flattened fully-connected baselines share the
//! same training and evaluation machinery.
//!
//! Everything is deterministic: all randomness flows from explicit 64-bit
//! seeds through [`rng::RngStream`], and reductions use fixed summation
//! orders, so a (seed, dataset, config) triple reproduces bit-identical
//! training runs on a given platform.

pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
