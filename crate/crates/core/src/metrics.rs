//! PSNR, SSIM, bone masks, Dice and evaluation over aligned pairs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Image2D, IntensitySpace, Mask};
use crate::error::{Error, Result};
use crate::networks::ModelBundle;
use crate::synthdata::{PhantomSample, PHANTOM_BONE_THRESHOLD};

/// Reported PSNR when the mean squared error vanishes.
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Mean squared error in unit space.
pub fn mse(pred: &Image2D, reference: &Image2D) -> Result<f64> {
    pred.require_same_shape(reference)?;
    let (p, r) = (pred.to_unit(), reference.to_unit());
    let n = p.data().len() as f64;
    Ok(p.data()
        .iter()
        .zip(r.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        / n)
}

/// `10·log10(1/MSE)` for peak 1, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < 1e-10 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn psnr(pred: &Image2D, reference: &Image2D) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, reference)?))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable Gaussian filtering over valid positions only.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ho, wo) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            rows[y * wo + x] = (0..SSIM_WINDOW).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = (0..SSIM_WINDOW)
                .map(|i| k[i] * rows[(y + i) * wo + x])
                .sum();
        }
    }
    out
}

/// Single-scale SSIM in unit space with an 11×11 Gaussian window (σ = 1.5).
pub fn ssim(pred: &Image2D, reference: &Image2D) -> Result<f64> {
    pred.require_same_shape(reference)?;
    let (h, w) = pred.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            requirement: "ssim needs at least 11x11".into(),
        });
    }
    let a: Vec<f64> = pred.to_unit().data().iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = reference
        .to_unit()
        .data()
        .iter()
        .map(|&v| v as f64)
        .collect();
    let k = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(&a, h, w, &k);
    let mu_b = filter_valid(&b, h, w, &k);
    let e_aa = filter_valid(&prod(&a, &a), h, w, &k);
    let e_bb = filter_valid(&prod(&b, &b), h, w, &k);
    let e_ab = filter_valid(&prod(&a, &b), h, w, &k);
    let (c1, c2) = (SSIM_K1.powi(2), SSIM_K2.powi(2));
    let n = mu_a.len() as f64;
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok((total / n).clamp(-1.0, 1.0))
}

/// `ct ≥ threshold` on a normalized image.
pub fn bone_mask(ct: &Image2D, threshold: f64) -> Result<Mask> {
    ct.require_space(IntensitySpace::Normalized)?;
    let data = ct.data().iter().map(|&v| v as f64 >= threshold).collect();
    Mask::new(ct.height(), ct.width(), data)
}

/// `2|a∩b| / (|a|+|b|)`, and 1 when both are empty.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    if a.shape() != b.shape() {
        let (s, t) = (a.shape(), b.shape());
        return Err(Error::ShapeMismatch {
            expected: vec![s.0, s.1],
            actual: vec![t.0, t.1],
        });
    }
    let inter = a
        .data()
        .iter()
        .zip(b.data())
        .filter(|(x, y)| **x && **y)
        .count();
    let total = a.count() + b.count();
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    })
}

/// Optional perceptual distance, e.g. a learned feature metric.
pub trait PerceptualDistance {
    fn distance(&self, a: &Image2D, b: &Image2D) -> Result<f64>;
}

/// Produces the A→B translations of evaluation pairs.
pub trait Translator {
    fn translate_pairs(&self, pairs: &[PhantomSample]) -> Result<Vec<Image2D>>;
}

impl Translator for ModelBundle<f32> {
    fn translate_pairs(&self, pairs: &[PhantomSample]) -> Result<Vec<Image2D>> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(16) {
            let xs: Vec<Image2D> = chunk.iter().map(|p| p.domain_a.clone()).collect();
            out.extend(self.translate_batch(&xs, 1.0)?);
        }
        Ok(out)
    }
}

/// Returns the aligned ground truth; an upper bound for every metric.
pub struct OracleTranslator;

impl Translator for OracleTranslator {
    fn translate_pairs(&self, pairs: &[PhantomSample]) -> Result<Vec<Image2D>> {
        Ok(pairs.iter().map(|p| p.domain_b.clone()).collect())
    }
}

/// Metrics of one translated image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub psnr_db: f64,
    pub ssim: f64,
    pub dice: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lpips: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and unbiased (n−1) standard deviation; std is 0 for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub psnr_db: MeanStd,
    pub ssim: MeanStd,
    pub dice: MeanStd,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lpips: Option<MeanStd>,
}

/// Contents of `eval_report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub bone_threshold: f64,
    pub per_image: Vec<EvalResult>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(Error::io(parent))?;
        }
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, json + "\n").map_err(Error::io(path))
    }
}

/// Threshold used to segment bone on translated phantoms.
pub fn phantom_bone_threshold() -> f64 {
    PHANTOM_BONE_THRESHOLD as f64
}

/// Translates every pair and scores it against the aligned B image and mask.
pub fn evaluate_pairs(
    translator: &dyn Translator,
    pairs: &[PhantomSample],
    perceptual: Option<&dyn PerceptualDistance>,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("no evaluation pairs".into()));
    }
    let threshold = phantom_bone_threshold();
    let translated = translator.translate_pairs(pairs)?;
    let per_image = pairs
        .iter()
        .zip(&translated)
        .map(|(pair, out)| {
            Ok(EvalResult {
                psnr_db: psnr(out, &pair.domain_b)?,
                ssim: ssim(out, &pair.domain_b)?,
                dice: dice(&bone_mask(out, threshold)?, &pair.bone_mask)?,
                lpips: perceptual
                    .map(|p| p.distance(out, &pair.domain_b))
                    .transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&EvalResult) -> f64| MeanStd::of(&per_image.iter().map(f).collect::<Vec<_>>());
    let aggregate = Aggregate {
        psnr_db: col(|r| r.psnr_db),
        ssim: col(|r| r.ssim),
        dice: col(|r| r.dice),
        lpips: perceptual.map(|_| col(|r| r.lpips.unwrap_or(f64::NAN))),
    };
    Ok(EvalReport {
        count: per_image.len(),
        bone_threshold: threshold,
        per_image,
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(h: usize, w: usize, f: impl FnMut(usize, usize) -> f32) -> Image2D {
        Image2D::from_fn(h, w, IntensitySpace::Unit, f).unwrap()
    }

    #[test]
    fn psnr_closed_forms() {
        let a = unit(4, 4, |_, _| 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        assert_abs_diff_eq!(psnr_from_mse(0.01), 20.0, epsilon = 1e-12);
        assert_eq!(psnr_from_mse(1.0), 0.0);
        let b = unit(4, 4, |_, _| 0.6);
        assert_abs_diff_eq!(psnr(&a, &b).unwrap(), 20.0, epsilon = 1e-4);
    }

    #[test]
    fn ssim_identity_and_too_small() {
        let a = unit(16, 16, |y, x| ((y * 7 + x * 3) % 11) as f32 / 10.0);
        assert_abs_diff_eq!(ssim(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        let tiny = unit(10, 16, |_, _| 0.0);
        assert!(matches!(ssim(&tiny, &tiny), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn dice_cases() {
        let m = |f: &dyn Fn(usize) -> bool| Mask::new(10, 20, (0..200).map(f).collect()).unwrap();
        let a = m(&|i| i < 100);
        let b = m(&|i| (50..150).contains(&i));
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &m(&|i| i >= 100)).unwrap(), 0.0);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(dice(&Mask::empty(3, 3), &Mask::empty(3, 3)).unwrap(), 1.0);
    }

    #[test]
    fn bone_mask_constants() {
        let lo = Image2D::filled(4, 4, -1.0, IntensitySpace::Normalized).unwrap();
        let hi = Image2D::filled(4, 4, 1.0, IntensitySpace::Normalized).unwrap();
        assert_eq!(bone_mask(&lo, 0.7).unwrap().count(), 0);
        assert_eq!(bone_mask(&hi, 0.7).unwrap().count(), 16);
    }

    #[test]
    fn unbiased_std() {
        let s = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_abs_diff_eq!(s.std, (5.0f64 / 3.0).sqrt(), epsilon = 1e-12);
    }
}
