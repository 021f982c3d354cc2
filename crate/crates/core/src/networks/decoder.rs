use std::f64::consts::PI;

use pathbone_tape::{Graph, ParamStore, Scalar, Tensor, Var};

use super::layers::{conv, init_conv, init_linear, linear, LEAK};
use crate::config::ArchConfig;
use crate::rng::Rng;

/// A decoder that exposes one activation per block.
///
/// `theta` holds one value per batch sample. The last tap is the output image.
pub trait TappedDecoder<T: Scalar> {
    fn taps<'g>(&self, g: &'g Graph<T>, z: Var<'g, T>, theta: &[f64]) -> Vec<Var<'g, T>>;
}

/// Sinusoidal features of θ: `sin(fᵢθ), cos(fᵢθ)` with `fᵢ = π·2^(4i/(D/2−1))`.
pub fn time_embedding<T: Scalar>(theta: &[f64], dim: usize) -> Tensor<T> {
    let half = dim / 2;
    let denom = (half.max(2) - 1) as f64;
    let mut data = Vec::with_capacity(theta.len() * dim);
    for &t in theta {
        for i in 0..half {
            let f = PI * 2f64.powf(4.0 * i as f64 / denom);
            data.push(T::from_f64_lossy((f * t).sin()));
        }
        for i in 0..half {
            let f = PI * 2f64.powf(4.0 * i as f64 / denom);
            data.push(T::from_f64_lossy((f * t).cos()));
        }
    }
    Tensor::new([theta.len(), dim], data)
}

/// Output channels of decoder block `k`.
fn block_channels(arch: &ArchConfig, k: usize) -> usize {
    let n = arch.encoder_channels.len();
    arch.encoder_channels[(n - 1).saturating_sub(k)]
}

pub(crate) fn init<T: Scalar>(arch: &ArchConfig, store: &mut ParamStore<T>, rng: &mut Rng) {
    let d = arch.time_embed_dim;
    let c0 = block_channels(arch, 0);
    init_linear(store, rng, "dec.time", d, d);
    init_conv(store, rng, "dec.stem", c0, arch.latent_channels, 3, 1.0);
    init_conv(store, rng, "dec.b0.c1", c0, c0, 3, 1.0);
    init_conv(store, rng, "dec.b0.c2", c0, c0, 3, 0.1);
    let k_total = arch.decoder_blocks();
    for k in 0..k_total {
        let c = block_channels(arch, k);
        if k > 0 {
            init_conv(
                store,
                rng,
                &format!("dec.b{k}.conv"),
                c,
                block_channels(arch, k - 1),
                3,
                1.0,
            );
        }
        init_linear(store, rng, &format!("dec.b{k}.scale"), c, d);
        init_linear(store, rng, &format!("dec.b{k}.shift"), c, d);
    }
    init_conv(
        store,
        rng,
        "dec.out",
        1,
        block_channels(arch, k_total - 1),
        3,
        1.0,
    );
}

/// Block activations for latent `z` at per-sample times `theta`.
pub(crate) fn forward<'g, T: Scalar>(
    g: &'g Graph<T>,
    p: &ParamStore<T>,
    arch: &ArchConfig,
    z: Var<'g, T>,
    theta: &[f64],
) -> Vec<Var<'g, T>> {
    let emb = g.constant(time_embedding(theta, arch.time_embed_dim));
    let t = linear(g, p, "dec.time", emb).leaky_relu(LEAK);
    let film = |k: usize, h: Var<'g, T>| {
        let scale = linear(g, p, &format!("dec.b{k}.scale"), t);
        let shift = linear(g, p, &format!("dec.b{k}.shift"), t);
        h.film(scale, shift).leaky_relu(LEAK)
    };
    let k_total = arch.decoder_blocks();
    let mut taps = Vec::with_capacity(k_total);

    let h = conv(g, p, "dec.stem", z, 1, 1);
    let r = conv(g, p, "dec.b0.c1", h, 1, 1).leaky_relu(LEAK);
    let mut h = film(0, h + conv(g, p, "dec.b0.c2", r, 1, 1));
    taps.push(h);
    for k in 1..k_total {
        h = film(
            k,
            conv(g, p, &format!("dec.b{k}.conv"), h.upsample2x(), 1, 1),
        );
        if k + 1 == k_total {
            taps.push(conv(g, p, "dec.out", h, 1, 1).tanh());
        } else {
            taps.push(h);
        }
    }
    taps
}

/// The trained decoder viewed through [`TappedDecoder`].
pub struct Decoder<'a, T> {
    pub params: &'a ParamStore<T>,
    pub arch: &'a ArchConfig,
}

impl<T: Scalar> TappedDecoder<T> for Decoder<'_, T> {
    fn taps<'g>(&self, g: &'g Graph<T>, z: Var<'g, T>, theta: &[f64]) -> Vec<Var<'g, T>> {
        forward(g, self.params, self.arch, z, theta)
    }
}
