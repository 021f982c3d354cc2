//! Forward and backward kernels for the structured (non-elementwise) ops.

use crate::scalar::gemm;
use crate::{Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], weight: &[usize], stride: usize, pad: usize) -> Self {
        let [n, c, h, w] = input[..] else {
            panic!("conv2d input must be NCHW, got {input:?}");
        };
        let [o, ci, kh, kw] = weight[..] else {
            panic!("conv2d weight must be OIHW, got {weight:?}");
        };
        assert_eq!(c, ci, "conv2d: input has {c} channels, weight expects {ci}");
        assert!(stride >= 1, "conv2d stride must be positive");
        assert!(
            h + 2 * pad >= kh && w + 2 * pad >= kw,
            "conv2d kernel {kh}x{kw} larger than padded input {h}x{w} (pad {pad})"
        );
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Self {
            n,
            c,
            h,
            w,
            o,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        }
    }

    fn ckk(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_hw(&self) -> usize {
        self.ho * self.wo
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output columns `[lo, hi)` whose input column `ox·stride + kj − pad` is in bounds.
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.pad);
        let lo = if kj >= p { 0 } else { (p - kj).div_ceil(s) };
        let hi = if self.w + p > kj {
            ((self.w + p - kj - 1) / s + 1).min(self.wo)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    fn im2col<T: Scalar>(&self, x: &[T], col: &mut [T]) {
        let hw = self.out_hw();
        for ci in 0..self.c {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let dst = &mut col[row * hw..(row + 1) * hw];
                    let (lo, hi) = self.valid_cols(kj);
                    for oy in 0..self.ho {
                        let drow = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            drow.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        drow[..lo].fill(T::zero());
                        drow[hi..].fill(T::zero());
                        let start = lo * self.stride + kj - self.pad;
                        if self.stride == 1 {
                            drow[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                        } else {
                            for (d, &v) in drow[lo..hi]
                                .iter_mut()
                                .zip(src[start..].iter().step_by(self.stride))
                            {
                                *d = v;
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, col: &[T], dx: &mut [T]) {
        let hw = self.out_hw();
        for ci in 0..self.c {
            let plane = &mut dx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let src = &col[row * hw..(row + 1) * hw];
                    let (lo, hi) = self.valid_cols(kj);
                    if lo >= hi {
                        continue;
                    }
                    let start = lo * self.stride + kj - self.pad;
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let drow = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        let srow = &src[oy * self.wo + lo..oy * self.wo + hi];
                        for (d, &g) in drow[start..].iter_mut().step_by(self.stride).zip(srow) {
                            *d += g;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let g = ConvGeom::new(x.shape(), weight.shape(), stride, pad);
    if let Some(b) = bias {
        assert_eq!(b.numel(), g.o, "conv2d bias length mismatch");
    }
    let (ckk, hw) = (g.ckk(), g.out_hw());
    let in_per = g.c * g.h * g.w;
    let out_per = g.o * hw;
    let mut out = vec![T::zero(); g.n * out_per];
    let mut col = if g.pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); ckk * hw]
    };
    for s in 0..g.n {
        let xs = &x.data()[s * in_per..(s + 1) * in_per];
        let ys = &mut out[s * out_per..(s + 1) * out_per];
        if g.pointwise() {
            gemm(g.o, ckk, hw, weight.data(), false, xs, false, ys, false);
        } else {
            g.im2col(xs, &mut col);
            gemm(g.o, ckk, hw, weight.data(), false, &col, false, ys, false);
        }
        if let Some(b) = bias {
            for (oc, row) in ys.chunks_mut(hw).enumerate() {
                let bv = b.data()[oc];
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::new([g.n, g.o, g.ho, g.wo], out)
}

/// Returns `(d_input, d_weight, d_bias)`, each computed only when requested.
#[allow(clippy::type_complexity)]
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
    want: (bool, bool, bool),
) -> (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>) {
    let g = ConvGeom::new(x.shape(), weight.shape(), stride, pad);
    let (ckk, hw) = (g.ckk(), g.out_hw());
    let in_per = g.c * g.h * g.w;
    let out_per = g.o * hw;
    let (want_x, want_w, want_b) = want;

    let mut dx = want_x.then(|| vec![T::zero(); g.n * in_per]);
    let mut dw = want_w.then(|| vec![T::zero(); g.o * ckk]);
    let mut db = want_b.then(|| vec![T::zero(); g.o]);
    let mut col = vec![T::zero(); if g.pointwise() { 0 } else { ckk * hw }];
    let mut dcol = vec![
        T::zero();
        if want_x && !g.pointwise() {
            ckk * hw
        } else {
            0
        }
    ];

    for s in 0..g.n {
        let dys = &dy.data()[s * out_per..(s + 1) * out_per];
        if let Some(db) = db.as_mut() {
            for (oc, row) in dys.chunks(hw).enumerate() {
                db[oc] += row.iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            let xs = &x.data()[s * in_per..(s + 1) * in_per];
            if g.pointwise() {
                gemm(g.o, hw, ckk, dys, false, xs, true, dw, true);
            } else {
                g.im2col(xs, &mut col);
                gemm(g.o, hw, ckk, dys, false, &col, true, dw, true);
            }
        }
        if let Some(dx) = dx.as_mut() {
            let dxs = &mut dx[s * in_per..(s + 1) * in_per];
            if g.pointwise() {
                gemm(ckk, g.o, hw, weight.data(), true, dys, false, dxs, true);
            } else {
                gemm(
                    ckk,
                    g.o,
                    hw,
                    weight.data(),
                    true,
                    dys,
                    false,
                    &mut dcol,
                    false,
                );
                g.col2im(&dcol, dxs);
            }
        }
    }
    (
        dx.map(|d| Tensor::new(x.shape().to_vec(), d)),
        dw.map(|d| Tensor::new(weight.shape().to_vec(), d)),
        db.map(|d| Tensor::new([g.o], d)),
    )
}

/// `y = x · Wᵀ + b` for `x: (N, I)`, `W: (O, I)`.
pub(crate) fn linear_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Tensor<T> {
    let (n, i) = x.dims2();
    let (o, i2) = w.dims2();
    assert_eq!(i, i2, "linear: input width {i} vs weight width {i2}");
    let mut y = vec![T::zero(); n * o];
    gemm(n, i, o, x.data(), false, w.data(), true, &mut y, false);
    if let Some(b) = b {
        assert_eq!(b.numel(), o, "linear bias length mismatch");
        for row in y.chunks_mut(o) {
            for (v, &bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
    }
    Tensor::new([n, o], y)
}

pub(crate) fn upsample2x_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); n * c * h2 * w2];
    for (plane, dst) in x.data().chunks(h * w).zip(out.chunks_mut(h2 * w2)) {
        for y in 0..h2 {
            let src = &plane[(y / 2) * w..(y / 2 + 1) * w];
            let row = &mut dst[y * w2..(y + 1) * w2];
            for (xo, v) in row.iter_mut().enumerate() {
                *v = src[xo / 2];
            }
        }
    }
    Tensor::new([n, c, h2, w2], out)
}

pub(crate) fn upsample2x_backward<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let (n, c, h2, w2) = dy.dims4();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = vec![T::zero(); n * c * h * w];
    for (src, dst) in dy.data().chunks(h2 * w2).zip(out.chunks_mut(h * w)) {
        for y in 0..h2 {
            for x in 0..w2 {
                dst[(y / 2) * w + x / 2] += src[y * w2 + x];
            }
        }
    }
    Tensor::new([n, c, h, w], out)
}

const SOBEL_X: [[i8; 3]; 3] = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
const SOBEL_Y: [[i8; 3]; 3] = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Raw Sobel responses `(gx, gy)` of one plane under replicate padding.
fn sobel_responses<T: Scalar>(plane: &[T], h: usize, w: usize) -> (Vec<T>, Vec<T>) {
    let mut gx = vec![T::zero(); h * w];
    let mut gy = vec![T::zero(); h * w];
    for r in 0..h {
        for c in 0..w {
            let (mut sx, mut sy) = (T::zero(), T::zero());
            for (i, (kx_row, ky_row)) in SOBEL_X.iter().zip(&SOBEL_Y).enumerate() {
                let rr = clamp_index(r as isize + i as isize - 1, h);
                for j in 0..3 {
                    let cc = clamp_index(c as isize + j as isize - 1, w);
                    let v = plane[rr * w + cc];
                    sx += T::from_i8(kx_row[j]).unwrap() * v;
                    sy += T::from_i8(ky_row[j]).unwrap() * v;
                }
            }
            gx[r * w + c] = sx;
            gy[r * w + c] = sy;
        }
    }
    (gx, gy)
}

/// Per-plane Sobel magnitude `clamp(sqrt(gx² + gy²) / 4, 0, 1)`.
pub(crate) fn sobel_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let four = T::from_f64_lossy(4.0);
    let mut out = Vec::with_capacity(x.numel());
    for plane in x.data().chunks(h * w) {
        let (gx, gy) = sobel_responses(plane, h, w);
        out.extend(
            gx.iter()
                .zip(&gy)
                .map(|(&a, &b)| ((a * a + b * b).sqrt() / four).min(T::one())),
        );
    }
    Tensor::new([n, c, h, w], out)
}

pub(crate) fn sobel_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let four = T::from_f64_lossy(4.0);
    let mut dx = vec![T::zero(); n * c * h * w];
    for ((plane, dplane), dst) in x
        .data()
        .chunks(h * w)
        .zip(dy.data().chunks(h * w))
        .zip(dx.chunks_mut(h * w))
    {
        let (gx, gy) = sobel_responses(plane, h, w);
        for r in 0..h {
            for col in 0..w {
                let p = r * w + col;
                let norm = (gx[p] * gx[p] + gy[p] * gy[p]).sqrt();
                // zero subgradient at the sqrt kink and where the clamp is active
                if norm == T::zero() || norm / four > T::one() {
                    continue;
                }
                let scale = dplane[p] / (four * norm);
                let (dgx, dgy) = (scale * gx[p], scale * gy[p]);
                for (i, (kx_row, ky_row)) in SOBEL_X.iter().zip(&SOBEL_Y).enumerate() {
                    let rr = clamp_index(r as isize + i as isize - 1, h);
                    for j in 0..3 {
                        let cc = clamp_index(col as isize + j as isize - 1, w);
                        dst[rr * w + cc] += T::from_i8(kx_row[j]).unwrap() * dgx
                            + T::from_i8(ky_row[j]).unwrap() * dgy;
                    }
                }
            }
        }
    }
    Tensor::new([n, c, h, w], dx)
}

fn plane_stats<T: Scalar>(plane: &[T], eps: T) -> (T, T) {
    let len = T::from_usize(plane.len()).unwrap();
    let mean = plane.iter().copied().sum::<T>() / len;
    let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / len;
    (mean, T::one() / (var + eps).sqrt())
}

pub(crate) fn instance_norm_forward<T: Scalar>(x: &Tensor<T>, eps: T) -> Tensor<T> {
    let (_, _, h, w) = x.dims4();
    let mut out = Vec::with_capacity(x.numel());
    for plane in x.data().chunks(h * w) {
        let (mean, inv) = plane_stats(plane, eps);
        out.extend(plane.iter().map(|&v| (v - mean) * inv));
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub(crate) fn instance_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    eps: T,
) -> Tensor<T> {
    let (_, _, h, w) = x.dims4();
    let len = T::from_usize(h * w).unwrap();
    let mut dx = Vec::with_capacity(x.numel());
    for (plane, dplane) in x.data().chunks(h * w).zip(dy.data().chunks(h * w)) {
        let (mean, inv) = plane_stats(plane, eps);
        let dmean = dplane.iter().copied().sum::<T>() / len;
        let dproj = plane
            .iter()
            .zip(dplane)
            .map(|(&v, &d)| d * (v - mean) * inv)
            .sum::<T>()
            / len;
        dx.extend(
            plane
                .iter()
                .zip(dplane)
                .map(|(&v, &d)| inv * (d - dmean - (v - mean) * inv * dproj)),
        );
    }
    Tensor::new(x.shape().to_vec(), dx)
}

/// Feature-wise affine modulation `x · (1 + scale[n,c]) + shift[n,c]`.
pub(crate) fn film_forward<T: Scalar>(
    x: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    assert_eq!(scale.shape(), [n, c], "film scale must be (N, C)");
    assert_eq!(shift.shape(), [n, c], "film shift must be (N, C)");
    let mut out = Vec::with_capacity(x.numel());
    for (p, plane) in x.data().chunks(h * w).enumerate() {
        let (s, t) = (T::one() + scale.data()[p], shift.data()[p]);
        out.extend(plane.iter().map(|&v| v * s + t));
    }
    Tensor::new([n, c, h, w], out)
}
