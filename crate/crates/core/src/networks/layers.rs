use pathbone_tape::{Graph, ParamStore, Scalar, Tensor, Var};
use rand::Rng as _;

use crate::rng::Rng;

pub(crate) const LEAK: f64 = 0.2;
pub(crate) const NORM_EPS: f64 = 1e-5;

fn uniform<T: Scalar>(rng: &mut Rng, shape: Vec<usize>, bound: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| {
        T::from_f64_lossy(rng.random_range(-bound..bound))
    })
}

/// Conv weights `name.w` (O, I, k, k) and bias `name.b`, uniform in ±gain/√fan_in.
pub(crate) fn init_conv<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut Rng,
    name: &str,
    out: usize,
    inp: usize,
    k: usize,
    gain: f64,
) {
    let bound = gain / ((inp * k * k) as f64).sqrt();
    store.insert(
        format!("{name}.w"),
        uniform(rng, vec![out, inp, k, k], bound),
    );
    store.insert(format!("{name}.b"), uniform(rng, vec![out], bound));
}

pub(crate) fn init_zero_conv<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    out: usize,
    inp: usize,
    k: usize,
) {
    store.insert(format!("{name}.w"), Tensor::zeros([out, inp, k, k]));
    store.insert(format!("{name}.b"), Tensor::zeros([out]));
}

/// Linear weights `name.w` (O, I) and bias `name.b`.
pub(crate) fn init_linear<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut Rng,
    name: &str,
    out: usize,
    inp: usize,
) {
    let bound = 1.0 / (inp as f64).sqrt();
    store.insert(format!("{name}.w"), uniform(rng, vec![out, inp], bound));
    store.insert(format!("{name}.b"), uniform(rng, vec![out], bound));
}

pub(crate) fn conv<'g, T: Scalar>(
    g: &'g Graph<T>,
    p: &ParamStore<T>,
    name: &str,
    x: Var<'g, T>,
    stride: usize,
    pad: usize,
) -> Var<'g, T> {
    x.conv2d(
        g.param(p, &format!("{name}.w")),
        Some(g.param(p, &format!("{name}.b"))),
        stride,
        pad,
    )
}

pub(crate) fn linear<'g, T: Scalar>(
    g: &'g Graph<T>,
    p: &ParamStore<T>,
    name: &str,
    x: Var<'g, T>,
) -> Var<'g, T> {
    x.linear(
        g.param(p, &format!("{name}.w")),
        Some(g.param(p, &format!("{name}.b"))),
    )
}
