//! Dataset representation, interchange format, importers, and the
//! synthetic generator.

pub mod dataset;
pub mod npy;
pub mod npz;
pub mod openmic;
pub mod store;
pub mod synth;

pub use dataset::{Bag, Dataset, Split};
pub use store::{load_dataset, save_dataset};
pub use synth::{generate_synthetic, InstanceTruth, SynthSpec};
