//! Sobel edges, bilateral smoothing, attention maps and map resampling.

use crate::domain::{Image2D, IntensitySpace};
use crate::error::{Error, Result};

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Sobel gradient magnitude in unit space, scaled by 1/4 and clamped to `[0, 1]`.
///
/// Normalized inputs are mapped to unit space first; borders replicate.
pub fn sobel_edges(img: &Image2D) -> Result<Image2D> {
    let (h, w) = img.shape();
    if h < 3 || w < 3 {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            requirement: "sobel needs at least 3x3".into(),
        });
    }
    let unit = img.to_unit();
    let px = |r: isize, c: isize| unit.data()[clamp_index(r, h) * w + clamp_index(c, w)] as f64;
    // separable: Gx = [1,2,1]ᵀ ⊗ [-1,0,1], Gy = [-1,0,1]ᵀ ⊗ [1,2,1]
    let mut diff_x = vec![0.0; h * w];
    let mut smooth_x = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let i = r as usize * w + c as usize;
            diff_x[i] = px(r, c + 1) - px(r, c - 1);
            smooth_x[i] = px(r, c - 1) + 2.0 * px(r, c) + px(r, c + 1);
        }
    }
    let at = |buf: &[f64], r: isize, c: usize| buf[clamp_index(r, h) * w + c];
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h as isize {
        for c in 0..w {
            let gx = at(&diff_x, r - 1, c) + 2.0 * at(&diff_x, r, c) + at(&diff_x, r + 1, c);
            let gy = at(&smooth_x, r + 1, c) - at(&smooth_x, r - 1, c);
            out.push(((gx * gx + gy * gy).sqrt() / 4.0).min(1.0) as f32);
        }
    }
    Image2D::new(h, w, out, IntensitySpace::Unit)
}

/// Edge-preserving smoothing over a `(2r+1)²` replicate-padded window.
pub fn bilateral_filter(
    img: &Image2D,
    sigma_s: f64,
    sigma_r: f64,
    radius: usize,
) -> Result<Image2D> {
    if !(sigma_s > 0.0 && sigma_s.is_finite() && sigma_r > 0.0 && sigma_r.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bilateral filter needs positive finite sigmas, got sigma_s={sigma_s} sigma_r={sigma_r}"
        )));
    }
    let (h, w) = img.shape();
    let r = radius as isize;
    let spatial: Vec<f64> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .map(|(dy, dx)| (-((dy * dy + dx * dx) as f64) / (2.0 * sigma_s * sigma_s)).exp())
        .collect();
    let inv_2sr2 = 1.0 / (2.0 * sigma_r * sigma_r);
    let src = img.data();
    let (lo, hi) = img.space().bounds();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let center = src[y as usize * w + x as usize] as f64;
            let (mut acc, mut norm) = (0.0, 0.0);
            let mut k = 0;
            for dy in -r..=r {
                let row = clamp_index(y + dy, h) * w;
                for dx in -r..=r {
                    let q = src[row + clamp_index(x + dx, w)] as f64;
                    let d = q - center;
                    let wt = spatial[k] * (-d * d * inv_2sr2).exp();
                    acc += wt * q;
                    norm += wt;
                    k += 1;
                }
            }
            out.push(((acc / norm) as f32).clamp(lo, hi));
        }
    }
    Image2D::new(h, w, out, img.space())
}

/// Bilateral parameters used to turn a contour into an attention map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttentionParams {
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub radius: usize,
}

impl Default for AttentionParams {
    fn default() -> Self {
        Self {
            sigma_s: 2.0,
            sigma_r: 0.2,
            radius: 4,
        }
    }
}

/// Spatial weighting map in `[0, 1]`, broadcast over channels when applied.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub map: Image2D,
    /// Checksum of the contour image the map was built from.
    pub source: u64,
}

impl AttentionMap {
    pub fn shape(&self) -> (usize, usize) {
        self.map.shape()
    }

    pub fn data(&self) -> &[f32] {
        self.map.data()
    }

    /// Constant map, mostly useful for tests.
    pub fn constant(h: usize, w: usize, value: f32) -> Result<Self> {
        Ok(Self {
            map: Image2D::filled(h, w, value, IntensitySpace::Unit)?,
            source: 0,
        })
    }
}

pub fn attention_map(contour: &Image2D) -> Result<AttentionMap> {
    attention_map_with(contour, AttentionParams::default())
}

pub fn attention_map_with(contour: &Image2D, params: AttentionParams) -> Result<AttentionMap> {
    contour.require_space(IntensitySpace::Unit)?;
    let map = bilateral_filter(contour, params.sigma_s, params.sigma_r, params.radius)?;
    Ok(AttentionMap {
        map,
        source: contour.checksum(),
    })
}

/// Resamples to `h × w`: block averages for integer shrink factors, bilinear
/// (half-pixel centres, edge clamped) otherwise.
pub fn resize_to(map: &AttentionMap, h: usize, w: usize) -> Result<AttentionMap> {
    if h == 0 || w == 0 {
        return Err(Error::InvalidConfig(format!("cannot resize to {h}x{w}")));
    }
    let (sh, sw) = map.shape();
    if (sh, sw) == (h, w) {
        return Ok(map.clone());
    }
    let src = map.data();
    let data: Vec<f32> = if sh % h == 0 && sw % w == 0 {
        let (fy, fx) = (sh / h, sw / w);
        let area = (fy * fx) as f64;
        (0..h * w)
            .map(|i| {
                let (oy, ox) = (i / w, i % w);
                let mut acc = 0.0;
                for y in oy * fy..(oy + 1) * fy {
                    for x in ox * fx..(ox + 1) * fx {
                        acc += src[y * sw + x] as f64;
                    }
                }
                (acc / area) as f32
            })
            .collect()
    } else {
        let coord = |o: usize, out: usize, inp: usize| -> (usize, usize, f64) {
            let c = ((o as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
            let i0 = c.floor() as usize;
            let i1 = (i0 + 1).min(inp - 1);
            (i0, i1, c - i0 as f64)
        };
        (0..h * w)
            .map(|i| {
                let (y0, y1, ty) = coord(i / w, h, sh);
                let (x0, x1, tx) = coord(i % w, w, sw);
                let g = |y: usize, x: usize| src[y * sw + x] as f64;
                let top = g(y0, x0) * (1.0 - tx) + g(y0, x1) * tx;
                let bottom = g(y1, x0) * (1.0 - tx) + g(y1, x1) * tx;
                (top * (1.0 - ty) + bottom * ty) as f32
            })
            .collect()
    };
    Ok(AttentionMap {
        map: Image2D::clamped(h, w, data, IntensitySpace::Unit)?,
        source: map.source,
    })
}
