use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Gradients, ParamStore, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub step: u64,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

/// Adam with per-parameter bias correction.
///
/// Each parameter carries its own step counter, so groups updated by
/// different losses (or skipped on some iterations) stay consistent.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    moments: BTreeMap<String, Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            moments: BTreeMap::new(),
        }
    }

    /// Applies one update to every parameter that has a gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) {
        let c = self.config;
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let eps = T::from_f64_lossy(c.eps);
        for (name, g) in grads.params() {
            let Some(p) = params.get_mut(name) else {
                panic!("gradient for unknown parameter `{name}`");
            };
            let st = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| Moments {
                    step: 0,
                    m: Tensor::zeros(g.shape().to_vec()),
                    v: Tensor::zeros(g.shape().to_vec()),
                });
            st.step += 1;
            let t = st.step as i32;
            let bc1 = 1.0 - c.beta1.powi(t);
            let bc2 = 1.0 - c.beta2.powi(t);
            let step_size = T::from_f64_lossy(c.lr / bc1);
            let bc2_sqrt = T::from_f64_lossy(bc2.sqrt());
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(st.m.data_mut().iter_mut())
                .zip(st.v.data_mut().iter_mut())
            {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                *pv -= step_size * *mv / ((*vv).sqrt() / bc2_sqrt + eps);
            }
        }
    }

    pub fn moments(&self) -> impl Iterator<Item = (&str, &Moments<T>)> {
        self.moments.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn set_moments(&mut self, name: impl Into<String>, moments: Moments<T>) {
        self.moments.insert(name.into(), moments);
    }
}
