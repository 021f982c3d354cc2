use pathbone_tape::{Graph, ParamStore, Scalar, Var};

use super::layers::{conv, init_conv, init_zero_conv, LEAK};
use crate::config::ArchConfig;
use crate::rng::Rng;

pub(crate) fn init<T: Scalar>(arch: &ArchConfig, store: &mut ParamStore<T>, rng: &mut Rng) {
    let mut inp = 1;
    for (i, &c) in arch.encoder_channels.iter().enumerate() {
        init_conv(store, rng, &format!("enc.down{i}"), c, inp, 4, 1.0);
        inp = c;
    }
    for j in 0..arch.residual_blocks {
        init_conv(store, rng, &format!("enc.res{j}.c1"), inp, inp, 3, 1.0);
        init_conv(store, rng, &format!("enc.res{j}.c2"), inp, inp, 3, 0.1);
    }
    init_conv(store, rng, "enc.mu", arch.latent_channels, inp, 1, 1.0);
    init_zero_conv(store, "enc.lv", arch.latent_channels, inp, 1);
}

/// Latent mean and log-variance maps, each `(N, C_z, H/2ⁿ, W/2ⁿ)`.
pub(crate) fn forward<'g, T: Scalar>(
    g: &'g Graph<T>,
    p: &ParamStore<T>,
    arch: &ArchConfig,
    x: Var<'g, T>,
) -> (Var<'g, T>, Var<'g, T>) {
    let mut h = x;
    for i in 0..arch.encoder_channels.len() {
        h = conv(g, p, &format!("enc.down{i}"), h, 2, 1).leaky_relu(LEAK);
    }
    for j in 0..arch.residual_blocks {
        let r = conv(g, p, &format!("enc.res{j}.c1"), h, 1, 1).leaky_relu(LEAK);
        h = h + conv(g, p, &format!("enc.res{j}.c2"), r, 1, 1);
    }
    (conv(g, p, "enc.mu", h, 1, 0), conv(g, p, "enc.lv", h, 1, 0))
}
