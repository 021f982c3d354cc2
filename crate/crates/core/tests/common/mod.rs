#![allow(dead_code)]

pub mod criteria;

use pathbone::synthdata::{make_splits, DatasetSplit};
use pathbone::{seeded_rng, ArchConfig, Image2D, IntensitySpace, TrainConfig};
use pathbone_tape::{Scalar, Tensor};
use rand::Rng;

/// Two decoder blocks and a one-stage discriminator, for 8×8 gradient checks.
pub fn tiny_arch() -> ArchConfig {
    ArchConfig {
        encoder_channels: vec![3],
        residual_blocks: 1,
        latent_channels: 2,
        time_embed_dim: 8,
        disc_channels: vec![3],
        contour_channels: 3,
        contour_blocks: 1,
    }
}

/// Smallest architecture that trains on 32×32 phantoms.
pub fn small_arch() -> ArchConfig {
    ArchConfig {
        encoder_channels: vec![4, 8],
        residual_blocks: 1,
        latent_channels: 4,
        time_embed_dim: 16,
        disc_channels: vec![4, 8],
        contour_channels: 4,
        contour_blocks: 1,
    }
}

/// Quick training configuration on [`small_arch`].
pub fn small_config(steps: u64) -> TrainConfig {
    TrainConfig {
        arch: small_arch(),
        steps,
        batch_size: 4,
        eval_every: 0,
        eval_images: 4,
        ..TrainConfig::default()
    }
}

pub fn small_data() -> DatasetSplit {
    make_splits(8, 4, 32, 7).expect("phantom splits")
}

pub fn random_tensor<T: Scalar>(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<T> {
    let mut rng = seeded_rng(seed, "test.tensor");
    Tensor::from_fn(shape.to_vec(), |_| {
        T::from_f64_lossy(rng.random_range(lo..hi))
    })
}

pub fn random_image(h: usize, w: usize, seed: u64, space: IntensitySpace) -> Image2D {
    let (lo, hi) = space.bounds();
    let mut rng = seeded_rng(seed, "test.image");
    let data = (0..h * w).map(|_| rng.random_range(lo..=hi)).collect();
    Image2D::new(h, w, data, space).expect("valid image")
}
