//! Differentially private federated training of segmentation models, and a
//! gradient inversion attack against it.
//!
//! * [`nn`]: lite U-Net family, Dice loss, parameter sets.
//! * [`dp`]: per-sample clipping, Gaussian noise, Rényi accountant.
//! * [`fed`]: in-process federated averaging over patient-disjoint shards.
//! * [`inversion`]: gradient-matching reconstruction and its evaluation.
//! * [`data`]: synthetic phantom slices, patient splits, augmentation.

pub mod error;
pub mod fed;
pub mod inversion;
pub mod data;
pub mod dp;
pub mod nn;

pub use error::{Error, Result};
