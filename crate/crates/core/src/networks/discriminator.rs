use pathbone_tape::{Graph, ParamStore, Scalar, Var};

use super::layers::{conv, init_conv, LEAK};
use crate::config::ArchConfig;
use crate::rng::Rng;

pub(crate) fn init<T: Scalar>(arch: &ArchConfig, store: &mut ParamStore<T>, rng: &mut Rng) {
    let mut inp = 1;
    for (i, &c) in arch.disc_channels.iter().enumerate() {
        init_conv(store, rng, &format!("disc.l{i}"), c, inp, 4, 1.0);
        inp = c;
    }
    init_conv(store, rng, "disc.head", 1, inp, 1, 1.0);
}

/// Unsquashed patch scores, `(N, 1, H/2ˢ, W/2ˢ)` for `s` stages.
pub(crate) fn forward<'g, T: Scalar>(
    g: &'g Graph<T>,
    p: &ParamStore<T>,
    arch: &ArchConfig,
    x: Var<'g, T>,
) -> Var<'g, T> {
    let mut h = x;
    for i in 0..arch.disc_channels.len() {
        h = conv(g, p, &format!("disc.l{i}"), h, 2, 1).leaky_relu(LEAK);
    }
    conv(g, p, "disc.head", h, 1, 0)
}

/// Smallest accepted side length: the score map keeps at least 4×4 patches.
pub fn min_input_side(arch: &ArchConfig) -> usize {
    4 << arch.disc_channels.len()
}
