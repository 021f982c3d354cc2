use pathbone_tape::{Graph, ParamStore, Scalar, Var};

use super::layers::{conv, init_conv, NORM_EPS};
use crate::config::ArchConfig;
use crate::rng::Rng;

pub(crate) fn init<T: Scalar>(arch: &ArchConfig, store: &mut ParamStore<T>, rng: &mut Rng) {
    let c = arch.contour_channels;
    init_conv(store, rng, "bone.stem", c, 1, 3, 1.0);
    init_conv(store, rng, "bone.down", 2 * c, c, 4, 1.0);
    for j in 0..arch.contour_blocks {
        init_conv(store, rng, &format!("bone.res{j}.c1"), 2 * c, 2 * c, 3, 1.0);
        init_conv(store, rng, &format!("bone.res{j}.c2"), 2 * c, 2 * c, 3, 1.0);
    }
    init_conv(store, rng, "bone.up", c, 2 * c, 3, 1.0);
    init_conv(store, rng, "bone.out", 1, c, 3, 1.0);
}

/// Contour probabilities in `[0, 1]`, same spatial size as the input.
pub(crate) fn forward<'g, T: Scalar>(
    g: &'g Graph<T>,
    p: &ParamStore<T>,
    arch: &ArchConfig,
    x: Var<'g, T>,
) -> Var<'g, T> {
    let block = |name: &str, h: Var<'g, T>, stride: usize, pad: usize| {
        conv(g, p, name, h, stride, pad).instance_norm(NORM_EPS)
    };
    let mut h = block("bone.stem", x, 1, 1).relu();
    h = block("bone.down", h, 2, 1).relu();
    for j in 0..arch.contour_blocks {
        let r = block(&format!("bone.res{j}.c1"), h, 1, 1).relu();
        h = h + block(&format!("bone.res{j}.c2"), r, 1, 1);
    }
    h = block("bone.up", h.upsample2x(), 1, 1).relu();
    conv(g, p, "bone.out", h, 1, 1).sigmoid()
}
