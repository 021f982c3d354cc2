//! Central finite differences over parameters, used to verify analytic
//! gradients. Only forward evaluations are involved, so the check is
//! independent of the backward kernels it validates.

use crate::{ParamStore, Tensor};

/// `(f(p + eps·e_i) − f(p − eps·e_i)) / (2·eps)` for every element of
/// parameter `name`.
pub fn param_gradient(
    store: &ParamStore<f64>,
    name: &str,
    eps: f64,
    mut loss: impl FnMut(&ParamStore<f64>) -> f64,
) -> Tensor<f64> {
    let base = store
        .get(name)
        .unwrap_or_else(|| panic!("no parameter `{name}`"))
        .clone();
    let mut probe = store.clone();
    let mut grad = Tensor::zeros(base.shape().to_vec());
    for i in 0..base.numel() {
        probe.get_mut(name).unwrap().data_mut()[i] = base.data()[i] + eps;
        let up = loss(&probe);
        probe.get_mut(name).unwrap().data_mut()[i] = base.data()[i] - eps;
        let down = loss(&probe);
        probe.get_mut(name).unwrap().data_mut()[i] = base.data()[i];
        grad.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    grad
}

/// Central differences of `f` with respect to every element of `x`.
pub fn input_gradient(
    x: &Tensor<f64>,
    eps: f64,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape().to_vec());
    for i in 0..x.numel() {
        let v = x.data()[i];
        probe.data_mut()[i] = v + eps;
        let up = f(&probe);
        probe.data_mut()[i] = v - eps;
        let down = f(&probe);
        probe.data_mut()[i] = v;
        grad.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    grad
}

/// Largest elementwise relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
