use pathbone_tape::{Graph, Tensor, Var};
use rand::Rng as _;

use super::state::TrainState;
use crate::config::ContourMode;
use crate::domain::{images_to_tensor, tensor_to_images, Image2D, IntensitySpace};
use crate::error::{Error, Result};
use crate::filters::attention_map;
use crate::losses::{
    adversarial_d_graph, adversarial_g_graph, bone_loss_graph, contour_net_loss_graph, kl_graph,
    l1_graph, path_jacobian_graph, path_loss_from_jacobians, path_weights, sobel_graph, LossReport,
};

fn finite(term: &'static str, value: f64, step: u64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss { term, step })
    }
}

fn value_f64(v: Var<'_, f32>) -> f64 {
    v.item() as f64
}

/// Inputs of one step as `(N, 1, H, W)` tensors.
pub struct Batch {
    pub x: Tensor<f32>,
    pub y: Tensor<f32>,
}

impl Batch {
    pub fn new(batch_x: &[Image2D], batch_y: &[Image2D]) -> Result<Self> {
        if batch_x.len() != batch_y.len() || batch_x.is_empty() {
            return Err(Error::ShapeMismatch {
                expected: vec![batch_x.len()],
                actual: vec![batch_y.len()],
            });
        }
        for img in batch_x.iter().chain(batch_y) {
            img.require_space(IntensitySpace::Normalized)?;
        }
        let x = images_to_tensor(batch_x)?;
        let y = images_to_tensor(batch_y)?;
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                expected: x.shape().to_vec(),
                actual: y.shape().to_vec(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Step (1): least-squares update of D on real B against detached translations.
pub fn discriminator_update(state: &mut TrainState, batch: &Batch) -> Result<f64> {
    let model = &state.model;
    let g = Graph::with_trainable(&["disc"]);
    let (mean, lv) = model.encode_graph(&g, g.constant(batch.x.clone()));
    let z = model.sample_latent(&g, mean, lv, &mut state.rngs.noise);
    let ones = vec![1.0; batch.len()];
    let fake = model
        .decode_graph(&g, z, &ones)
        .pop()
        .expect("output tap")
        .detach();
    let real_scores = model.discriminate_graph(&g, g.constant(batch.y.clone()));
    let fake_scores = model.discriminate_graph(&g, fake);
    let loss = adversarial_d_graph(real_scores, fake_scores);
    let gan_d = finite("gan_d", value_f64(loss), state.step)?;
    let grads = g.backward(loss);
    drop(g);
    state.optimizer.step(state.model.params_mut(), &grads);
    Ok(gan_d)
}

/// Contour target of the source batch in unit space, or `None` when inactive.
fn contour_target(state: &TrainState, x: &Tensor<f32>) -> Option<Tensor<f32>> {
    if !state.config.contour_active() {
        return None;
    }
    let g = Graph::frozen();
    let xv = g.constant(x.clone());
    let out = match state.config.contour_mode {
        ContourMode::Learned => state.model.contour_graph(&g, xv),
        ContourMode::SobelInput => sobel_graph(xv),
        ContourMode::None => return None,
    };
    Some(out.value().as_ref().clone())
}

/// Step (2): encoder and decoder update on the weighted generator objective.
///
/// Returns the partial report (without `gan_d`) and the detached translations.
pub fn generator_update(
    state: &mut TrainState,
    batch: &Batch,
) -> Result<(LossReport, Tensor<f32>)> {
    let target = contour_target(state, &batch.x);
    generator_update_with_target(state, batch, target)
}

fn generator_update_with_target(
    state: &mut TrainState,
    batch: &Batch,
    target: Option<Tensor<f32>>,
) -> Result<(LossReport, Tensor<f32>)> {
    let n = batch.len();
    let w = state.config.effective_weights();
    let multiscale = state.config.multiscale;
    let (h_min, h_max) = (state.config.h_min, state.config.h_max);
    let hs: Vec<f64> = (0..n)
        .map(|_| {
            if h_min < h_max {
                state.rngs.h.random_range(h_min..h_max)
            } else {
                h_min
            }
        })
        .collect();
    let thetas: Vec<f64> = hs
        .iter()
        .map(|&h| state.rngs.theta.random_range(h / 2.0..1.0 - h / 2.0))
        .collect();

    let model = &state.model;
    let g = Graph::with_trainable(&["enc", "dec"]);
    let (x, y) = (g.constant(batch.x.clone()), g.constant(batch.y.clone()));
    let (mu_x, lv_x) = model.encode_graph(&g, x);
    let (mu_y, lv_y) = model.encode_graph(&g, y);
    let z_x = model.sample_latent(&g, mu_x, lv_x, &mut state.rngs.noise);
    let z_y = model.sample_latent(&g, mu_y, lv_y, &mut state.rngs.noise);
    let (zeros, ones) = (vec![0.0; n], vec![1.0; n]);
    let x_rec = model
        .decode_graph(&g, z_x, &zeros)
        .pop()
        .expect("output tap");
    let y_hat = model
        .decode_graph(&g, z_x, &ones)
        .pop()
        .expect("output tap");
    let y_rec = model
        .decode_graph(&g, z_y, &ones)
        .pop()
        .expect("output tap");

    let rec_x = l1_graph(x_rec, x);
    let rec_y = l1_graph(y_rec, y);
    let kl = kl_graph(mu_x, lv_x) + kl_graph(mu_y, lv_y);
    let gan_g = adversarial_g_graph(model.discriminate_graph(&g, y_hat));
    let mut total =
        (rec_x + rec_y).scale(w.lambda_rec) + gan_g.scale(w.lambda_gan) + kl.scale(w.lambda_kl);
    let mut report = LossReport {
        rec_x: value_f64(rec_x),
        rec_y: value_f64(rec_y),
        kl: value_f64(kl),
        gan_g: value_f64(gan_g),
        ..LossReport::default()
    };

    if w.lambda_path > 0.0 {
        let jac = path_jacobian_graph(&g, &model.decoder(), z_x, &thetas, &hs)?;
        let maps = match (&target, w.alpha > 0.0) {
            (Some(t), true) => Some(
                tensor_to_images(t, IntensitySpace::Unit)?
                    .iter()
                    .map(attention_map)
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        let shapes: Vec<Vec<usize>> = jac.iter().map(|j| j.shape()).collect();
        let weights = path_weights::<f32>(&shapes, maps.as_deref(), w.alpha)?;
        let path = path_loss_from_jacobians(&g, &jac, &weights, multiscale);
        report.path = value_f64(path);
        total = total + path.scale(w.lambda_path);
    }
    if let (Some(t), true) = (&target, w.lambda_bone > 0.0) {
        let bone = bone_loss_graph(y_hat, g.constant(t.clone()));
        report.bone = value_f64(bone);
        total = total + bone.scale(w.lambda_bone);
    }
    for (term, v) in report.terms() {
        finite(term, v, state.step)?;
    }
    finite("total", value_f64(total), state.step)?;
    let translated = y_hat.value().as_ref().clone();
    let grads = g.backward(total);
    drop(g);
    state.optimizer.step(state.model.params_mut(), &grads);
    Ok((report, translated))
}

/// Step (3): contour-network update toward the Sobel edges of frozen translations.
pub fn contour_update(
    state: &mut TrainState,
    batch: &Batch,
    translated: &Tensor<f32>,
) -> Result<f64> {
    let g = Graph::with_trainable(&["bone"]);
    let pred = state.model.contour_graph(&g, g.constant(batch.x.clone()));
    finish_contour_update(state, &g, pred, translated)
}

fn finish_contour_update(
    state: &mut TrainState,
    g: &Graph<f32>,
    pred: Var<'_, f32>,
    translated: &Tensor<f32>,
) -> Result<f64> {
    let loss = contour_net_loss_graph(g.constant(translated.clone()), pred);
    let value = finite("contour", value_f64(loss), state.step)?;
    let grads = g.backward(loss);
    state.optimizer.step(state.model.params_mut(), &grads);
    Ok(value)
}

/// One full iteration in the order D, then E and G, then the contour network.
pub fn train_step(
    state: &mut TrainState,
    batch_x: &[Image2D],
    batch_y: &[Image2D],
) -> Result<LossReport> {
    let batch = Batch::new(batch_x, batch_y)?;
    train_step_batch(state, &batch)
}

pub fn train_step_batch(state: &mut TrainState, batch: &Batch) -> Result<LossReport> {
    let gan_d = discriminator_update(state, batch)?;
    let mut report = if state.config.learned_contour() {
        // The contour forward pass serves both as the generator's target and
        // as the start of the contour update; step (2) leaves `bone.*` untouched.
        let g = Graph::with_trainable(&["bone"]);
        let pred = state.model.contour_graph(&g, g.constant(batch.x.clone()));
        let target = pred.value().as_ref().clone();
        let (report, translated) = generator_update_with_target(state, batch, Some(target))?;
        finish_contour_update(state, &g, pred, &translated)?;
        report
    } else {
        generator_update(state, batch)?.0
    };
    report.gan_d = gan_d;
    state.step += 1;
    Ok(report)
}
