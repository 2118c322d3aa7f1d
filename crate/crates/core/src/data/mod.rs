//! Synthetic phantom slices standing in for abdominal CT: a bright elliptical
//! organ over a smooth background with noise and dimmer distractor blobs.

mod augment;
mod dataset;
mod phantom;
pub mod pgm;
mod split;

pub use augment::{apply_affine, augment, Affine, AugmentParams};
pub use dataset::{generate_dataset, load_dataset, write_dataset, Dataset, DatasetConfig};
pub use phantom::{generate_patient, generate_phantom, PhantomSample, MIN_SIZE, NOISE_STD};
pub use split::{split_dataset, Split, SplitManifest, DEFAULT_FRACTIONS};
