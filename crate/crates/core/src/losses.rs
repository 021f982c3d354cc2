//! Training objectives, each available on tape variables (for training) and
//! on plain values (for evaluation and tests).

use pathbone_tape::{Graph, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::config::LossWeights;
use crate::domain::{Image2D, IntensitySpace, LatentCode};
use crate::error::{Error, Result};
use crate::filters::{resize_to, sobel_edges, AttentionMap};
use crate::networks::{ModelBundle, TappedDecoder};

/// Slack allowed when checking that a stencil stays inside `[0, 1]`.
const STENCIL_SLACK: f64 = 1e-12;

/// Per-term values of one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec_x: f64,
    pub rec_y: f64,
    pub kl: f64,
    pub gan_g: f64,
    pub gan_d: f64,
    pub path: f64,
    pub bone: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "step,rec_x,rec_y,kl,gan_g,gan_d,path,bone,total";

    pub fn terms(&self) -> [(&'static str, f64); 7] {
        [
            ("rec_x", self.rec_x),
            ("rec_y", self.rec_y),
            ("kl", self.kl),
            ("gan_g", self.gan_g),
            ("gan_d", self.gan_d),
            ("path", self.path),
            ("bone", self.bone),
        ]
    }

    /// First non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        self.terms()
            .into_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| n)
    }

    pub fn csv_row(&self, step: u64, total: f64) -> String {
        let mut row = step.to_string();
        for (_, v) in self.terms() {
            row.push(',');
            row.push_str(&v.to_string());
        }
        row.push(',');
        row.push_str(&total.to_string());
        row
    }
}

/// Weighted generator objective.
pub fn total_generator_loss(report: &LossReport, w: &LossWeights) -> Result<f64> {
    if let Some(term) = report.non_finite_term() {
        return Err(Error::NonFinite {
            context: format!("loss term {term}"),
        });
    }
    Ok(w.lambda_rec * (report.rec_x + report.rec_y)
        + w.lambda_gan * report.gan_g
        + w.lambda_path * report.path
        + w.lambda_bone * report.bone
        + w.lambda_kl * report.kl)
}

/// Mean over elements of `-½(1 + lv − μ² − e^lv)`.
pub fn kl_graph<'g, T: Scalar>(mean: Var<'g, T>, log_var: Var<'g, T>) -> Var<'g, T> {
    (log_var.add_scalar(1.0) - mean.square() - log_var.exp())
        .mean()
        .scale(-0.5)
}

fn kl_single<T: Scalar>(code: &LatentCode<T>) -> f64 {
    let n = code.mean.numel() as f64;
    code.mean
        .data()
        .iter()
        .zip(code.log_variance.data())
        .map(|(&m, &lv)| {
            let (m, lv) = (m.to_f64_lossy(), lv.to_f64_lossy());
            -0.5 * (1.0 + lv - m * m - lv.exp())
        })
        .sum::<f64>()
        / n
}

/// KL of both codes to the standard normal prior, summed.
pub fn kl_loss<T: Scalar>(code_x: &LatentCode<T>, code_y: &LatentCode<T>) -> f64 {
    kl_single(code_x) + kl_single(code_y)
}

pub fn l1_graph<'g, T: Scalar>(pred: Var<'g, T>, target: Var<'g, T>) -> Var<'g, T> {
    (pred - target).abs().mean()
}

/// Mean absolute difference.
pub fn recon_loss(pred: &Image2D, target: &Image2D) -> Result<f64> {
    pred.require_same_shape(target)?;
    let n = pred.data().len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum::<f64>()
        / n)
}

/// Finite-difference θ-derivatives of every decoder tap.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEstimate<T> {
    pub per_layer_jacobians: Vec<Tensor<T>>,
    pub theta: Vec<f64>,
    pub h: Vec<f64>,
}

fn check_stencil(theta: &[f64], h: &[f64]) -> Result<()> {
    for (&t, &h) in theta.iter().zip(h) {
        if !(h > 0.0) || t - h / 2.0 < -STENCIL_SLACK || t + h / 2.0 > 1.0 + STENCIL_SLACK {
            return Err(Error::StencilOutOfRange { theta: t, h });
        }
    }
    Ok(())
}

/// `(tapᵏ(z, θ+h/2) − tapᵏ(z, θ−h/2)) / h` per layer, with per-sample θ and h.
pub fn path_jacobian_graph<'g, T: Scalar, D: TappedDecoder<T> + ?Sized>(
    g: &'g Graph<T>,
    decoder: &D,
    z: Var<'g, T>,
    theta: &[f64],
    h: &[f64],
) -> Result<Vec<Var<'g, T>>> {
    let n = z.shape()[0];
    if theta.len() != n || h.len() != n {
        return Err(Error::ShapeMismatch {
            expected: vec![n],
            actual: vec![theta.len(), h.len()],
        });
    }
    check_stencil(theta, h)?;
    let plus: Vec<f64> = theta.iter().zip(h).map(|(t, h)| t + h / 2.0).collect();
    let minus: Vec<f64> = theta.iter().zip(h).map(|(t, h)| t - h / 2.0).collect();
    let inv_h: Vec<T> = h.iter().map(|&h| T::from_f64_lossy(1.0 / h)).collect();
    let up = decoder.taps(g, z, &plus);
    let down = decoder.taps(g, z, &minus);
    Ok(up
        .into_iter()
        .zip(down)
        .map(|(a, b)| (a - b).scale_samples(&inv_h))
        .collect())
}

/// Value-level [`path_jacobian_graph`] for a single θ and h shared by the batch.
pub fn path_jacobian<T: Scalar, D: TappedDecoder<T> + ?Sized>(
    decoder: &D,
    z: &Tensor<T>,
    theta: f64,
    h: f64,
) -> Result<PathEstimate<T>> {
    let n = z.shape()[0];
    let (thetas, hs) = (vec![theta; n], vec![h; n]);
    let g = Graph::frozen();
    let jac = path_jacobian_graph(&g, decoder, g.constant(z.clone()), &thetas, &hs)?;
    Ok(PathEstimate {
        per_layer_jacobians: jac.iter().map(|v| v.value().as_ref().clone()).collect(),
        theta: thetas,
        h: hs,
    })
}

/// `1 + α·W` resized to each tap and broadcast over channels.
///
/// `maps` holds one attention map per sample; `None` means `W ≡ 0`.
pub fn path_weights<T: Scalar>(
    tap_shapes: &[Vec<usize>],
    maps: Option<&[AttentionMap]>,
    alpha: f64,
) -> Result<Vec<Option<Tensor<T>>>> {
    let Some(maps) = maps.filter(|_| alpha != 0.0) else {
        return Ok(vec![None; tap_shapes.len()]);
    };
    tap_shapes
        .iter()
        .map(|shape| {
            let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
            if maps.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: vec![n],
                    actual: vec![maps.len()],
                });
            }
            let mut data = Vec::with_capacity(n * c * h * w);
            for m in maps {
                let r = resize_to(m, h, w)?;
                let plane: Vec<T> = r
                    .data()
                    .iter()
                    .map(|&v| T::from_f64_lossy(1.0 + alpha * v as f64))
                    .collect();
                for _ in 0..c {
                    data.extend_from_slice(&plane);
                }
            }
            Ok(Some(Tensor::new(shape.clone(), data)))
        })
        .collect()
}

/// Layer-mean of `mean[(1 + αW)·Ĵ²]`; only the final layer when `multiscale` is off.
pub fn path_loss_from_jacobians<'g, T: Scalar>(
    g: &'g Graph<T>,
    jacobians: &[Var<'g, T>],
    weights: &[Option<Tensor<T>>],
    multiscale: bool,
) -> Var<'g, T> {
    let first = if multiscale { 0 } else { jacobians.len() - 1 };
    let count = jacobians.len() - first;
    let mut total: Option<Var<'g, T>> = None;
    for (j, w) in jacobians[first..].iter().zip(&weights[first..]) {
        let sq = j.square();
        let term = match w {
            Some(w) => (sq * g.constant(w.clone())).mean(),
            None => sq.mean(),
        };
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    total.expect("at least one layer").scale(1.0 / count as f64)
}

/// Value-level path penalty for one shared attention map, θ and h.
pub fn path_loss<T: Scalar, D: TappedDecoder<T> + ?Sized>(
    decoder: &D,
    z: &Tensor<T>,
    w: &AttentionMap,
    alpha: f64,
    theta: f64,
    h: f64,
    multiscale: bool,
) -> Result<f64> {
    let est = path_jacobian(decoder, z, theta, h)?;
    let n = z.shape()[0];
    let maps = vec![w.clone(); n];
    let shapes: Vec<Vec<usize>> = est
        .per_layer_jacobians
        .iter()
        .map(|t| t.shape().to_vec())
        .collect();
    let weights = path_weights::<T>(&shapes, Some(&maps), alpha)?;
    let g = Graph::frozen();
    let jac: Vec<Var<'_, T>> = est
        .per_layer_jacobians
        .into_iter()
        .map(|t| g.constant(t))
        .collect();
    Ok(path_loss_from_jacobians(&g, &jac, &weights, multiscale)
        .item()
        .to_f64_lossy())
}

/// Sobel magnitude of a normalized-space batch, in unit space.
pub fn sobel_graph<'g, T: Scalar>(normalized: Var<'g, T>) -> Var<'g, T> {
    normalized.add_scalar(1.0).scale(0.5).sobel_magnitude()
}

/// `mean|sobel(translated) − target|` with the target held constant.
pub fn bone_loss_graph<'g, T: Scalar>(
    translated: Var<'g, T>,
    contour_target: Var<'g, T>,
) -> Var<'g, T> {
    l1_graph(sobel_graph(translated), contour_target.detach())
}

/// Same discrepancy, with the Sobel side frozen so only the contour network learns.
pub fn contour_net_loss_graph<'g, T: Scalar>(
    translated: Var<'g, T>,
    contour_pred: Var<'g, T>,
) -> Var<'g, T> {
    l1_graph(sobel_graph(translated).detach(), contour_pred)
}

pub fn bone_loss(translated: &Image2D, contour_target: &Image2D) -> Result<f64> {
    translated.require_same_shape(contour_target)?;
    contour_target.require_space(IntensitySpace::Unit)?;
    recon_loss(&sobel_edges(translated)?, contour_target)
}

/// Contour-network objective evaluated with the model's current parameters.
pub fn contour_net_loss<T: Scalar>(
    model: &ModelBundle<T>,
    translated_frozen: &Image2D,
    x: &Image2D,
) -> Result<f64> {
    let pred = model.bone_contour(x)?;
    bone_loss(translated_frozen, &pred)
}

pub fn adversarial_d_graph<'g, T: Scalar>(real: Var<'g, T>, fake: Var<'g, T>) -> Var<'g, T> {
    real.add_scalar(-1.0).square().mean() + fake.square().mean()
}

pub fn adversarial_g_graph<'g, T: Scalar>(fake: Var<'g, T>) -> Var<'g, T> {
    fake.add_scalar(-1.0).square().mean()
}

/// Least-squares discriminator loss: reals toward 1, fakes toward 0.
pub fn adversarial_d_loss<T: Scalar>(real_scores: &Tensor<T>, fake_scores: &Tensor<T>) -> f64 {
    let mean_sq = |t: &Tensor<T>, target: f64| {
        t.data()
            .iter()
            .map(|v| (v.to_f64_lossy() - target).powi(2))
            .sum::<f64>()
            / t.numel() as f64
    };
    mean_sq(real_scores, 1.0) + mean_sq(fake_scores, 0.0)
}

pub fn adversarial_g_loss<T: Scalar>(fake_scores: &Tensor<T>) -> f64 {
    fake_scores
        .data()
        .iter()
        .map(|v| (v.to_f64_lossy() - 1.0).powi(2))
        .sum::<f64>()
        / fake_scores.numel() as f64
}
