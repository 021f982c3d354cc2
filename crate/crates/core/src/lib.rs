//! Unpaired image translation as a time-conditioned latent flow, regularized
//! by a layer-wise path-length penalty and a learned bone-contour loss.
//!
//! The crate also ships a deterministic two-modality phantom generator so that
//! training, evaluation and ablations run end to end without clinical data.

pub mod config;
pub mod domain;
pub mod error;
pub mod filters;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod rng;
pub mod synthdata;
pub mod trainer;

pub use config::{ArchConfig, ContourMode, LossWeights, Setting, TrainConfig};
pub use domain::{
    normalize_hu, normalized_bone_threshold, HuCalibration, Image2D, IntensitySpace, LatentCode,
    Mask,
};
pub use error::{Error, Result};
pub use rng::seeded_rng;
