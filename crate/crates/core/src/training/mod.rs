//! Missing-label-aware loss, Adam, the epoch loop, and the multi-seed
//! experiment driver.

mod adam;
mod config;
mod loss;
mod run;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::TrainConfig;
pub use loss::{mean_bce, partial_bce, LossConfig, PROB_CLAMP};
pub use run::{batch_tensors, run_seeds, train, EpochRecord, TrainOutcome};
