use std::f64::consts::PI;

use rand::Rng as _;

use crate::domain::{Image2D, IntensitySpace, Mask};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, Rng};

/// Normalized domain-B intensity at and above which a phantom pixel is bone.
pub const PHANTOM_BONE_THRESHOLD: f32 = 0.7;

/// Smallest supported phantom side length.
pub const MIN_PHANTOM_SIZE: usize = 32;

const BONE_B: f64 = 0.9;
const BONE_A: f64 = -0.8;
const BAND_A: f64 = -0.6;
const BACKGROUND: f64 = -1.0;
const BODY_MARGIN_PX: f64 = 4.0;
const FIELD_GRID: usize = 5;

/// Aligned pseudo-MRI / pseudo-CT pair with its ground-truth bone mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSample {
    /// Pseudo-MRI: bright tissue, dark low-contrast bone.
    pub domain_a: Image2D,
    /// Pseudo-CT: flat tissue, bright bone.
    pub domain_b: Image2D,
    pub bone_mask: Mask,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    angle: f64,
}

impl Ellipse {
    /// Approximate signed distance in pixels: negative inside.
    fn signed_distance(&self, y: f64, x: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let rho = ((u / self.a).powi(2) + (v / self.b).powi(2)).sqrt();
        if rho < 1e-12 {
            return -self.a.min(self.b);
        }
        let grad = ((u / (self.a * self.a)).powi(2) + (v / (self.b * self.b)).powi(2)).sqrt() / rho;
        (rho - 1.0) / grad
    }
}

/// Builds the phantom for `seed` deterministically.
pub fn generate_phantom(seed: u64, size: usize) -> Result<PhantomSample> {
    if size < MIN_PHANTOM_SIZE || size % 2 != 0 {
        return Err(Error::TooSmall {
            height: size,
            width: size,
            requirement: format!("phantom size must be even and >= {MIN_PHANTOM_SIZE}"),
        });
    }
    let s = size as f64;
    let mut geo = seeded_rng(seed, "phantom.geometry");
    let body = Ellipse {
        cy: s / 2.0 + geo.random_range(-0.06..0.06) * s,
        cx: s / 2.0 + geo.random_range(-0.06..0.06) * s,
        a: geo.random_range(0.30..0.42) * s,
        b: geo.random_range(0.26..0.38) * s,
        angle: geo.random_range(0.0..PI),
    };
    let body_sd: Vec<f64> = (0..size * size)
        .map(|i| body.signed_distance((i / size) as f64, (i % size) as f64))
        .collect();
    let inside: Vec<bool> = body_sd.iter().map(|&d| d <= 0.0).collect();

    let mask = loop {
        let m = bone_rings(&mut geo, &body, &body_sd, size);
        if m.iter().any(|&b| b) {
            break m;
        }
    };
    let halo_outer = dilate(&mask, size, 1);
    let band_outer = dilate(&mask, size, 3);

    let tissue_b = smooth_field(&mut seeded_rng(seed, "phantom.tissue_b"), size, -0.2, 0.2);
    let tissue_a = smooth_field(&mut seeded_rng(seed, "phantom.tissue_a"), size, 0.0, 0.6);

    let mut b = vec![BACKGROUND; size * size];
    let mut a = vec![BACKGROUND; size * size];
    for i in 0..size * size {
        if !inside[i] {
            continue;
        }
        b[i] = if mask[i] { BONE_B } else { tissue_b[i] };
        a[i] = if halo_outer[i] {
            BONE_A
        } else if band_outer[i] {
            BAND_A
        } else {
            tissue_a[i]
        };
    }
    let b = smooth_outside_mask(&b, &mask, size);
    let a = smooth_outside_mask(&a, &mask, size);

    let to_f32 = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<_>>();
    Ok(PhantomSample {
        domain_a: Image2D::new(size, size, to_f32(a), IntensitySpace::Normalized)?,
        domain_b: Image2D::new(size, size, to_f32(b), IntensitySpace::Normalized)?,
        bone_mask: Mask::new(size, size, mask)?,
        seed,
    })
}

/// One to three elliptical rings restricted to the eroded body.
fn bone_rings(rng: &mut Rng, body: &Ellipse, body_sd: &[f64], size: usize) -> Vec<bool> {
    let s = size as f64;
    let count = rng.random_range(1..=3);
    let rings: Vec<(Ellipse, f64)> = (0..count)
        .map(|_| {
            let r = rng.random_range(0.0..0.45);
            let phi = rng.random_range(0.0..2.0 * PI);
            let (u, v) = (r * body.a * phi.cos(), r * body.b * phi.sin());
            let (sn, cs) = body.angle.sin_cos();
            let ring = Ellipse {
                cx: body.cx + cs * u - sn * v,
                cy: body.cy + sn * u + cs * v,
                a: rng.random_range(0.06..0.14) * s,
                b: rng.random_range(0.06..0.14) * s,
                angle: rng.random_range(0.0..PI),
            };
            let width = rng.random_range(2.0..4.0);
            (ring, width)
        })
        .collect();
    (0..size * size)
        .map(|i| {
            if body_sd[i] > -BODY_MARGIN_PX {
                return false;
            }
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            rings
                .iter()
                .any(|(e, w)| e.signed_distance(y, x).abs() <= w / 2.0)
        })
        .collect()
}

/// Chebyshev dilation by `radius` pixels.
fn dilate(mask: &[bool], size: usize, radius: usize) -> Vec<bool> {
    let r = radius as isize;
    (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as isize, (i % size) as isize);
            (-r..=r).any(|dy| {
                (-r..=r).any(|dx| {
                    let (yy, xx) = (y + dy, x + dx);
                    yy >= 0
                        && xx >= 0
                        && (yy as usize) < size
                        && (xx as usize) < size
                        && mask[yy as usize * size + xx as usize]
                })
            })
        })
        .collect()
}

/// Bilinear upsampling of a coarse uniform random grid; stays inside `[lo, hi]`.
fn smooth_field(rng: &mut Rng, size: usize, lo: f64, hi: f64) -> Vec<f64> {
    let grid: Vec<f64> = (0..FIELD_GRID * FIELD_GRID)
        .map(|_| rng.random_range(lo..=hi))
        .collect();
    let scale = (FIELD_GRID - 1) as f64 / (size - 1) as f64;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let gy = y as f64 * scale;
        let y0 = (gy.floor() as usize).min(FIELD_GRID - 2);
        let ty = gy - y0 as f64;
        for x in 0..size {
            let gx = x as f64 * scale;
            let x0 = (gx.floor() as usize).min(FIELD_GRID - 2);
            let tx = gx - x0 as f64;
            let g = |r: usize, c: usize| grid[r * FIELD_GRID + c];
            let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
            let bottom = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
            out.push((top * (1.0 - ty) + bottom * ty).clamp(lo, hi));
        }
    }
    out
}

/// 3×3 binomial blur over non-mask pixels only, renormalized over the
/// in-bounds non-mask neighbours. Mask pixels keep their value.
fn smooth_outside_mask(img: &[f64], mask: &[bool], size: usize) -> Vec<f64> {
    const K: [f64; 3] = [1.0, 2.0, 1.0];
    (0..size * size)
        .map(|i| {
            if mask[i] {
                return img[i];
            }
            let (y, x) = ((i / size) as isize, (i % size) as isize);
            let (mut acc, mut norm) = (0.0, 0.0);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy < 0 || xx < 0 || yy as usize >= size || xx as usize >= size {
                        continue;
                    }
                    let j = yy as usize * size + xx as usize;
                    if mask[j] {
                        continue;
                    }
                    let w = K[(dy + 1) as usize] * K[(dx + 1) as usize];
                    acc += w * img[j];
                    norm += w;
                }
            }
            acc / norm
        })
        .collect()
}
