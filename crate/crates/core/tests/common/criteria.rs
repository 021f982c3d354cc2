//! Property checks shared by the acceptance report and the module tests.
//!
//! Every check returns a one-line summary on success and a diagnostic on failure.

use std::fs;

use pathbone::filters::{attention_map, bilateral_filter, sobel_edges, AttentionMap};
use pathbone::losses::{
    bone_loss_graph, contour_net_loss_graph, kl_graph, l1_graph, path_jacobian,
    path_jacobian_graph, path_loss, path_loss_from_jacobians, path_weights,
};
use pathbone::metrics::{bone_mask, dice, psnr, ssim, MeanStd};
use pathbone::networks::{ModelBundle, TappedDecoder};
use pathbone::synthdata::{generate_phantom, PHANTOM_BONE_THRESHOLD};
use pathbone::trainer::{
    contour_update, discriminator_update, fit, generator_update, Batch, TrainState, TRAIN_LOG,
};
use pathbone::{seeded_rng, Image2D, IntensitySpace, Mask, Setting};
use pathbone_tape::fd::{max_relative_error, param_gradient};
use pathbone_tape::{Graph, ParamStore, Tensor, Var};
use rand::Rng;

use super::{random_image, random_tensor, small_config, small_data, tiny_arch};

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1. Finite-difference exactness

/// Stub decoder with `tapᵏ(θ) = aᵏ + θᵖ·cᵏ`, independent of `z`.
struct PolyDecoder {
    offsets: Vec<Tensor<f64>>,
    coeffs: Vec<Tensor<f64>>,
    power: i32,
}

impl PolyDecoder {
    fn new(power: i32, seed: u64) -> Self {
        let shapes = [[1, 3, 2, 2], [1, 2, 4, 4], [1, 1, 8, 8]];
        Self {
            offsets: shapes
                .iter()
                .enumerate()
                .map(|(k, s)| random_tensor(s, seed + k as u64, -1.0, 1.0))
                .collect(),
            coeffs: shapes
                .iter()
                .enumerate()
                .map(|(k, s)| random_tensor(s, seed + 10 + k as u64, -1.0, 1.0))
                .collect(),
            power,
        }
    }

    /// Symbolic `d tapᵏ / dθ = p·θᵖ⁻¹·cᵏ`.
    fn derivative(&self, k: usize, theta: f64) -> Vec<f64> {
        let f = self.power as f64 * theta.powi(self.power - 1);
        self.coeffs[k].data().iter().map(|c| f * c).collect()
    }
}

impl TappedDecoder<f64> for PolyDecoder {
    fn taps<'g>(&self, g: &'g Graph<f64>, z: Var<'g, f64>, theta: &[f64]) -> Vec<Var<'g, f64>> {
        let n = z.shape()[0];
        self.offsets
            .iter()
            .zip(&self.coeffs)
            .map(|(a, c)| {
                let mut shape = a.shape().to_vec();
                shape[0] = n;
                let data = theta
                    .iter()
                    .flat_map(|&t| {
                        let tp = t.powi(self.power);
                        a.data().iter().zip(c.data()).map(move |(a, c)| a + tp * c)
                    })
                    .collect();
                g.constant(Tensor::new(shape, data))
            })
            .collect()
    }
}

pub fn finite_difference_exactness() -> Check {
    let z = Tensor::<f64>::zeros(vec![2, 1, 1, 1]);
    let mut rng = seeded_rng(1, "criteria.fd");
    let hs: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..0.2)).collect();
    let mut worst: f64 = 0.0;
    for (power, seed) in [(1, 100), (2, 200)] {
        let dec = PolyDecoder::new(power, seed);
        for &h in &hs {
            let thetas = [
                h / 2.0,
                0.5,
                1.0 - h / 2.0,
                rng.random_range(h / 2.0..1.0 - h / 2.0),
            ];
            for &theta in &thetas {
                let est = path_jacobian(&dec, &z, theta, h).map_err(err)?;
                for (k, j) in est.per_layer_jacobians.iter().enumerate() {
                    let expected = dec.derivative(k, theta);
                    for n in 0..2 {
                        let per = expected.len();
                        for (got, want) in j.data()[n * per..(n + 1) * per].iter().zip(&expected) {
                            worst = worst.max((got - want).abs());
                        }
                    }
                }
            }
        }
    }
    ensure(worst <= 1e-10, || {
        format!("max |Ĵ − dtap/dθ| = {worst:.3e} > 1e-10")
    })?;
    Ok(format!(
        "affine and quadratic stubs, h ∈ {{{:.3}, {:.3}, {:.3}}}: max error {worst:.1e}",
        hs[0], hs[1], hs[2]
    ))
}

// 2. Gradient check on the tiny model

fn tiny_model(seed: u64) -> ModelBundle<f64> {
    ModelBundle::<f32>::new(tiny_arch(), seed)
        .expect("tiny model")
        .cast()
}

struct GradFixture {
    x: Tensor<f64>,
    z: Tensor<f64>,
    thetas: Vec<f64>,
    hs: Vec<f64>,
    weights: Vec<Option<Tensor<f64>>>,
    target: Tensor<f64>,
}

fn grad_fixture(model: &ModelBundle<f64>) -> GradFixture {
    let x = random_tensor(&[2, 1, 8, 8], 11, -1.0, 1.0);
    let z = random_tensor(&[2, tiny_arch().latent_channels, 4, 4], 12, -1.0, 1.0);
    let (thetas, hs) = (vec![0.3, 0.71], vec![0.12, 0.18]);
    let maps: Vec<AttentionMap> = (0..2)
        .map(|i| attention_map(&random_image(8, 8, 13 + i, IntensitySpace::Unit)).expect("map"))
        .collect();
    let g = Graph::frozen();
    let shapes: Vec<Vec<usize>> = model
        .decoder()
        .taps(&g, g.constant(z.clone()), &thetas)
        .iter()
        .map(|t| t.shape())
        .collect();
    let weights = path_weights(&shapes, Some(&maps), 1.0).expect("weights");
    let target = random_tensor(&[2, 1, 8, 8], 14, 0.0, 1.0);
    GradFixture {
        x,
        z,
        thetas,
        hs,
        weights,
        target,
    }
}

fn path_term<'g>(m: &ModelBundle<f64>, f: &GradFixture, g: &'g Graph<f64>) -> Var<'g, f64> {
    let jac = path_jacobian_graph(g, &m.decoder(), g.constant(f.z.clone()), &f.thetas, &f.hs)
        .expect("stencil");
    path_loss_from_jacobians(g, &jac, &f.weights, true)
}

fn bone_term<'g>(m: &ModelBundle<f64>, f: &GradFixture, g: &'g Graph<f64>) -> Var<'g, f64> {
    let y_hat = m
        .decode_graph(g, g.constant(f.z.clone()), &[1.0, 1.0])
        .pop()
        .expect("output");
    bone_loss_graph(y_hat, g.constant(f.target.clone()))
}

fn kl_term<'g>(m: &ModelBundle<f64>, f: &GradFixture, g: &'g Graph<f64>) -> Var<'g, f64> {
    let (mu, lv) = m.encode_graph(g, g.constant(f.x.clone()));
    kl_graph(mu, lv)
}

fn recon_term<'g>(m: &ModelBundle<f64>, f: &GradFixture, g: &'g Graph<f64>) -> Var<'g, f64> {
    let x = g.constant(f.x.clone());
    let (mu, _) = m.encode_graph(g, x);
    let rec = m.decode_graph(g, mu, &[0.0, 0.0]).pop().expect("output");
    l1_graph(rec, x)
}

fn gradient_error(
    name: &str,
    groups: &[&str],
    term: for<'g> fn(&ModelBundle<f64>, &GradFixture, &'g Graph<f64>) -> Var<'g, f64>,
) -> Result<(f64, usize), String> {
    let model = tiny_model(3);
    let fixture = grad_fixture(&model);
    let g = Graph::with_trainable(groups);
    let loss = term(&model, &fixture, &g);
    let grads = g.backward(loss);
    let arch = model.arch().clone();
    let eval = |store: &ParamStore<f64>| {
        let m = ModelBundle::from_params(arch.clone(), store.clone()).expect("same layout");
        let g = Graph::frozen();
        term(&m, &fixture, &g).item()
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (pname, _) in model.params().iter() {
        if !groups.iter().any(|p| pname.starts_with(&format!("{p}."))) {
            continue;
        }
        let analytic = grads
            .param(pname)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(model.params().get(pname).unwrap().shape().to_vec()));
        let numeric = param_gradient(model.params(), pname, 1e-5, &eval);
        let e = max_relative_error(&analytic, &numeric, 1e-5);
        if e > worst {
            worst = e;
        }
        checked += analytic.numel();
        ensure(e < 1e-4, || {
            format!("{name}: parameter `{pname}` relative error {e:.3e}")
        })?;
    }
    Ok((worst, checked))
}

pub fn gradient_check() -> Check {
    let mut parts = Vec::new();
    let cases: [(
        &str,
        &[&str],
        for<'g> fn(&ModelBundle<f64>, &GradFixture, &'g Graph<f64>) -> Var<'g, f64>,
    ); 4] = [
        ("path", &["dec"], path_term),
        ("bone", &["dec"], bone_term),
        ("kl", &["enc"], kl_term),
        ("recon", &["enc", "dec"], recon_term),
    ];
    for (name, groups, term) in cases {
        let (worst, n) = gradient_error(name, groups, term)?;
        parts.push(format!("{name} {worst:.1e} ({n})"));
    }
    Ok(format!(
        "8×8, K=2, f64; max rel. error per loss (elements): {}",
        parts.join(", ")
    ))
}

// 3. Reduction identities and setting-A gating

pub fn reduction_identities() -> Check {
    let model = tiny_model(5);
    let z = random_tensor(&[1, tiny_arch().latent_channels, 4, 4], 21, -1.0, 1.0);
    let dec = model.decoder();
    let w_rand = attention_map(&random_image(8, 8, 22, IntensitySpace::Unit)).map_err(err)?;
    let w_one = AttentionMap::constant(8, 8, 1.0).map_err(err)?;
    let (theta, h) = (0.4, 0.15);

    let base = path_loss(&dec, &z, &w_rand, 0.0, theta, h, true).map_err(err)?;
    let est = path_jacobian(&dec, &z, theta, h).map_err(err)?;
    let manual = est
        .per_layer_jacobians
        .iter()
        .map(|j| j.data().iter().map(|v| v * v).sum::<f64>() / j.numel() as f64)
        .sum::<f64>()
        / est.per_layer_jacobians.len() as f64;
    ensure(base > 0.0, || {
        "path loss of a random decoder is zero".into()
    })?;
    ensure(((base - manual) / manual).abs() < 1e-12, || {
        format!("α=0: {base} vs unweighted {manual}")
    })?;
    let same = path_loss(&dec, &z, &w_one, 0.0, theta, h, true).map_err(err)?;
    ensure(same == base, || {
        format!("α=0 depends on W: {same} vs {base}")
    })?;
    let doubled = path_loss(&dec, &z, &w_one, 1.0, theta, h, true).map_err(err)?;
    ensure(doubled == 2.0 * base, || {
        format!("W≡1, α=1: {doubled} vs 2×{base}")
    })?;

    let data = small_data();
    let dir = tempfile::tempdir().map_err(err)?;
    let config = pathbone::TrainConfig {
        setting: Setting::A,
        ..small_config(4)
    };
    fit(&config, &data, dir.path()).map_err(err)?;
    let log = fs::read_to_string(dir.path().join(TRAIN_LOG)).map_err(err)?;
    let rows: Vec<&str> = log.lines().skip(1).collect();
    ensure(rows.len() == 4, || {
        format!("expected 4 log rows, got {}", rows.len())
    })?;
    for row in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        let (path, bone): (f64, f64) =
            (cols[6].parse().map_err(err)?, cols[7].parse().map_err(err)?);
        ensure(path == 0.0 && bone == 0.0, || {
            format!("setting A log row has path/bone terms: {row}")
        })?;
    }
    Ok(format!("α=0 matches unweighted form (rel. {:.1e}); W≡1, α=1 gives exactly 2×; setting A logs path = bone = 0", ((base - manual) / manual).abs()))
}

// 4. Stop-gradient isolation

fn group_gradient_stats(grads: &pathbone_tape::Gradients<f32>, prefix: &str) -> (usize, f64) {
    let mut count = 0;
    let mut max: f64 = 0.0;
    for (name, t) in grads.params() {
        if name.starts_with(&format!("{prefix}.")) {
            count += 1;
            max = t.data().iter().fold(max, |m, v| m.max(v.abs() as f64));
        }
    }
    (count, max)
}

fn changed(before: &ModelBundle<f32>, after: &ModelBundle<f32>, prefix: &str) -> Vec<String> {
    before
        .params()
        .iter()
        .filter(|(n, _)| n.starts_with(&format!("{prefix}.")))
        .filter(|(n, t)| after.params().get(n) != Some(*t))
        .map(|(n, _)| n.to_string())
        .collect()
}

pub fn stop_gradient_isolation() -> Check {
    let data = small_data();
    let model = ModelBundle::<f32>::new(super::small_arch(), 9).map_err(err)?;
    let x = pathbone::domain::images_to_tensor::<f32>(&data.train_a[..2]).map_err(err)?;
    let mut rng = seeded_rng(0, "criteria.noise");

    // bone_loss: the contour prediction is a constant target for E and G.
    let g = Graph::<f32>::new();
    let xv = g.constant(x.clone());
    let (mu, lv) = model.encode_graph(&g, xv);
    let z = model.sample_latent(&g, mu, lv, &mut rng);
    let y_hat = model
        .decode_graph(&g, z, &[1.0, 1.0])
        .pop()
        .expect("output");
    let loss = bone_loss_graph(y_hat, model.contour_graph(&g, xv));
    let grads = g.backward(loss);
    let (_, bone_max) = group_gradient_stats(&grads, "bone");
    let (dec_n, dec_max) = group_gradient_stats(&grads, "dec");
    ensure(bone_max == 0.0, || {
        format!("bone_loss leaks {bone_max:e} into G_bone")
    })?;
    ensure(dec_n > 0 && dec_max > 0.0, || {
        "bone_loss gives no gradient to G".into()
    })?;

    // contour_net_loss: the Sobel edge of the translation is a constant target.
    let g = Graph::<f32>::new();
    let xv = g.constant(x.clone());
    let (mu, lv) = model.encode_graph(&g, xv);
    let z = model.sample_latent(&g, mu, lv, &mut rng);
    let y_hat = model
        .decode_graph(&g, z, &[1.0, 1.0])
        .pop()
        .expect("output");
    let _ = model.discriminate_graph(&g, y_hat);
    let loss = contour_net_loss_graph(y_hat, model.contour_graph(&g, xv));
    let grads = g.backward(loss);
    for prefix in ["enc", "dec", "disc"] {
        let (_, m) = group_gradient_stats(&grads, prefix);
        ensure(m == 0.0, || {
            format!("contour_net_loss leaks {m:e} into `{prefix}`")
        })?;
    }
    let (bone_n, bone_max) = group_gradient_stats(&grads, "bone");
    ensure(bone_n > 0 && bone_max > 0.0, || {
        "contour_net_loss gives no gradient to G_bone".into()
    })?;

    // Parameter probe through the three phases of one training step.
    let config = small_config(1);
    let mut state = TrainState::new(config, data.train_a.len(), data.train_b.len()).map_err(err)?;
    let batch = Batch::new(&data.train_a[..4], &data.train_b[..4]).map_err(err)?;
    let before = state.model.clone();
    discriminator_update(&mut state, &batch).map_err(err)?;
    let after_d = state.model.clone();
    for p in ["enc", "dec", "bone"] {
        let c = changed(&before, &after_d, p);
        ensure(c.is_empty(), || format!("D update changed {c:?}"))?;
    }
    ensure(!changed(&before, &after_d, "disc").is_empty(), || {
        "D update left D unchanged".into()
    })?;
    let (_, translated) = generator_update(&mut state, &batch).map_err(err)?;
    let after_g = state.model.clone();
    for p in ["bone", "disc"] {
        let c = changed(&after_d, &after_g, p);
        ensure(c.is_empty(), || format!("E+G update changed {c:?}"))?;
    }
    contour_update(&mut state, &batch, &translated).map_err(err)?;
    for p in ["enc", "dec", "disc"] {
        let c = changed(&after_g, &state.model, p);
        ensure(c.is_empty(), || format!("G_bone update changed {c:?}"))?;
    }
    ensure(!changed(&after_g, &state.model, "bone").is_empty(), || {
        "G_bone update left G_bone unchanged".into()
    })?;
    Ok(
        "cross-gradients exactly 0 both ways; each update phase touches only its own parameters"
            .into(),
    )
}

// 5. Filter oracles

/// Direct 3×3 correlation with the Sobel kernels under replicate padding.
pub fn naive_sobel(img: &Image2D) -> Vec<f64> {
    let unit = img.to_unit();
    let (h, w) = img.shape();
    let gx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let (mut sx, mut sy) = (0.0, 0.0);
            for (i, row) in gx.iter().enumerate() {
                for (j, _) in row.iter().enumerate() {
                    let rr = (r as isize + i as isize - 1).clamp(0, h as isize - 1) as usize;
                    let cc = (c as isize + j as isize - 1).clamp(0, w as isize - 1) as usize;
                    let v = unit.get(rr, cc) as f64;
                    sx += gx[i][j] * v;
                    sy += gx[j][i] * v;
                }
            }
            out[r * w + c] = ((sx * sx + sy * sy).sqrt() / 4.0).clamp(0.0, 1.0);
        }
    }
    out
}

/// Direct evaluation of the bilateral sum over the replicate-padded window.
pub fn naive_bilateral(img: &Image2D, sigma_s: f64, sigma_r: f64, radius: usize) -> Vec<f64> {
    let (h, w) = img.shape();
    let r = radius as isize;
    let at = |y: isize, x: isize| {
        img.get(
            y.clamp(0, h as isize - 1) as usize,
            x.clamp(0, w as isize - 1) as usize,
        ) as f64
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = at(y, x);
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let q = at(y + dy, x + dx);
                    let wt = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma_s * sigma_s)).exp()
                        * (-(p - q) * (p - q) / (2.0 * sigma_r * sigma_r)).exp();
                    num += wt * q;
                    den += wt;
                }
            }
            out.push(num / den);
        }
    }
    out
}

/// Normalized Gaussian convolution over the same window.
pub fn gaussian_blur(img: &Image2D, sigma: f64, radius: usize) -> Vec<f64> {
    let (h, w) = img.shape();
    let r = radius as isize;
    let at = |y: isize, x: isize| {
        img.get(
            y.clamp(0, h as isize - 1) as usize,
            x.clamp(0, w as isize - 1) as usize,
        ) as f64
    };
    let norm: f64 = (-r..=r)
        .flat_map(|dy| {
            (-r..=r).map(move |dx| (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp())
        })
        .sum();
    (0..h as isize)
        .flat_map(|y| (0..w as isize).map(move |x| (y, x)))
        .map(|(y, x)| {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    acc += (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp()
                        * at(y + dy, x + dx);
                }
            }
            acc / norm
        })
        .collect()
}

fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y).abs())
        .fold(0.0, f64::max)
}

pub fn filter_oracles() -> Check {
    let (mut sobel_err, mut bil_err, mut blur_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut rng = seeded_rng(2, "criteria.filters");
    for i in 0..20 {
        let space = if i % 2 == 0 {
            IntensitySpace::Normalized
        } else {
            IntensitySpace::Unit
        };
        let img = random_image(16, 16, 300 + i, space);
        sobel_err = sobel_err.max(max_abs_diff(
            sobel_edges(&img).map_err(err)?.data(),
            &naive_sobel(&img),
        ));
        let (ss, sr, r) = (
            rng.random_range(0.5..3.0),
            rng.random_range(0.05..1.0),
            rng.random_range(0..5usize),
        );
        bil_err = bil_err.max(max_abs_diff(
            bilateral_filter(&img, ss, sr, r).map_err(err)?.data(),
            &naive_bilateral(&img, ss, sr, r),
        ));
        blur_err = blur_err.max(max_abs_diff(
            bilateral_filter(&img, ss, 1e6, r).map_err(err)?.data(),
            &gaussian_blur(&img, ss, r),
        ));
    }
    ensure(sobel_err <= 1e-6, || {
        format!("sobel vs naive: {sobel_err:e}")
    })?;
    ensure(bil_err <= 1e-6, || {
        format!("bilateral vs naive: {bil_err:e}")
    })?;
    ensure(blur_err <= 1e-5, || {
        format!("bilateral(σ_r=1e6) vs Gaussian blur: {blur_err:e}")
    })?;
    Ok(format!("20 random 16×16 images: sobel {sobel_err:.1e}, bilateral {bil_err:.1e}, σ_r=1e6 vs blur {blur_err:.1e}"))
}

// 6. Metric identities

/// Single-scale SSIM with a full 2D 11×11 Gaussian window over valid positions.
pub fn naive_ssim(a: &Image2D, b: &Image2D) -> f64 {
    let (a, b) = (a.to_unit(), b.to_unit());
    let (h, w) = a.shape();
    let mut k = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    let mut n = 0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wt = k[i][j] / total;
                    let (p, q) = (a.get(y + i, x + j) as f64, b.get(y + i, x + j) as f64);
                    ma += wt * p;
                    mb += wt * q;
                    saa += wt * p * p;
                    sbb += wt * q * q;
                    sab += wt * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            n += 1;
        }
    }
    acc / n as f64
}

fn mask_from_fn(h: usize, w: usize, f: impl Fn(usize) -> bool) -> Mask {
    Mask::new(h, w, (0..h * w).map(f).collect()).expect("mask")
}

pub fn metric_identities() -> Check {
    let unit = |v: f32| Image2D::filled(16, 16, v, IntensitySpace::Unit).expect("image");
    let x = random_image(32, 32, 40, IntensitySpace::Unit);
    let p_same = psnr(&x, &x).map_err(err)?;
    ensure(p_same == 100.0, || format!("psnr(x,x) = {p_same}"))?;
    let p20 = psnr(&unit(0.5), &unit(0.6)).map_err(err)?;
    ensure((p20 - 20.0).abs() < 1e-5, || {
        format!("psnr at MSE 0.01 = {p20}")
    })?;
    let p0 = psnr(&unit(0.0), &unit(1.0)).map_err(err)?;
    ensure(p0.abs() < 1e-12, || format!("psnr at MSE 1 = {p0}"))?;

    let s_same = ssim(&x, &x).map_err(err)?;
    ensure((s_same - 1.0).abs() < 1e-12, || {
        format!("ssim(x,x) = {s_same}")
    })?;
    let board =
        Image2D::from_fn(16, 16, IntensitySpace::Unit, |r, c| ((r + c) % 2) as f32).map_err(err)?;
    let inverse = Image2D::from_fn(16, 16, IntensitySpace::Unit, |r, c| {
        1.0 - ((r + c) % 2) as f32
    })
    .map_err(err)?;
    let s_board = ssim(&board, &inverse).map_err(err)?;
    let s_ref = naive_ssim(&board, &inverse);
    ensure(s_board < 0.0, || {
        format!("checkerboard ssim {s_board} is not negative")
    })?;
    ensure((s_board - s_ref).abs() < 1e-6, || {
        format!("checkerboard ssim {s_board} vs reference {s_ref}")
    })?;
    let y = random_image(32, 32, 41, IntensitySpace::Unit);
    let (s_xy, s_yx) = (ssim(&x, &y).map_err(err)?, ssim(&y, &x).map_err(err)?);
    ensure(s_xy == s_yx, || {
        format!("ssim asymmetric: {s_xy} vs {s_yx}")
    })?;
    ensure((s_xy - naive_ssim(&x, &y)).abs() < 1e-6, || {
        "random-pair ssim disagrees with reference".into()
    })?;

    let full = mask_from_fn(20, 20, |i| i < 100);
    let d_same = dice(&full, &full).map_err(err)?;
    let disjoint = mask_from_fn(20, 20, |i| (100..200).contains(&i));
    let d_disjoint = dice(&full, &disjoint).map_err(err)?;
    let half = mask_from_fn(20, 20, |i| (50..150).contains(&i));
    let d_half = dice(&full, &half).map_err(err)?;
    let empty = Mask::empty(20, 20);
    let d_empty = dice(&empty, &empty).map_err(err)?;
    ensure(
        d_same == 1.0 && d_disjoint == 0.0 && d_half == 0.5 && d_empty == 1.0,
        || {
            format!(
                "dice cases: same {d_same}, disjoint {d_disjoint}, half {d_half}, empty {d_empty}"
            )
        },
    )?;

    let neg = Image2D::filled(16, 16, -1.0, IntensitySpace::Normalized).map_err(err)?;
    let pos = Image2D::filled(16, 16, 1.0, IntensitySpace::Normalized).map_err(err)?;
    ensure(bone_mask(&neg, 0.7).map_err(err)?.count() == 0, || {
        "bone_mask(−1) not empty".into()
    })?;
    ensure(bone_mask(&pos, 0.7).map_err(err)?.count() == 256, || {
        "bone_mask(+1) not full".into()
    })?;
    let ct = random_image(24, 24, 42, IntensitySpace::Normalized);
    let thresholds = [-0.9, -0.5, 0.0, 0.3, 0.7, 0.95];
    for pair in thresholds.windows(2) {
        let (lo, hi) = (
            bone_mask(&ct, pair[0]).map_err(err)?,
            bone_mask(&ct, pair[1]).map_err(err)?,
        );
        let subset = hi.data().iter().zip(lo.data()).all(|(&h, &l)| !h || l);
        ensure(subset, || {
            format!("bone_mask at {} is not a subset of {}", pair[1], pair[0])
        })?;
    }
    let phantom = generate_phantom(3, 64).map_err(err)?;
    ensure(
        bone_mask(&phantom.domain_b, PHANTOM_BONE_THRESHOLD as f64).map_err(err)?
            == phantom.bone_mask,
        || "bone_mask of a phantom differs from its construction mask".into(),
    )?;
    let ms = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
    ensure(
        ms.mean == 2.5 && (ms.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15,
        || format!("MeanStd {ms:?}"),
    )?;
    Ok(format!("psnr 100/20/0 dB, ssim(x,x)=1, checkerboard ssim {s_board:.4} (reference {s_ref:.4}), dice cases, mask monotone"))
}

// 7. Determinism

pub fn determinism() -> Check {
    let data = small_data();
    let config = small_config(100);
    let (a, b) = (
        tempfile::tempdir().map_err(err)?,
        tempfile::tempdir().map_err(err)?,
    );
    fit(&config, &data, a.path()).map_err(err)?;
    fit(&config, &data, b.path()).map_err(err)?;
    let la = fs::read(a.path().join(TRAIN_LOG)).map_err(err)?;
    let lb = fs::read(b.path().join(TRAIN_LOG)).map_err(err)?;
    let rows = String::from_utf8_lossy(&la).lines().count() - 1;
    ensure(rows == 100, || format!("expected 100 log rows, got {rows}"))?;
    ensure(la == lb, || {
        "train_log.csv differs between identical runs".into()
    })?;
    Ok(format!(
        "two 100-step runs: train_log.csv byte-identical ({} bytes)",
        la.len()
    ))
}

// 12. Trajectory behaviour

fn max_jump(a: &Image2D, b: &Image2D) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs() as f64)
        .fold(0.0, f64::max)
}

/// Endpoint identity and continuity of the rendered trajectory on `images`.
pub fn trajectory_behaviour(model: &ModelBundle<f32>, images: &[Image2D], panels: usize) -> Check {
    let mut worst_ratio: f64 = 0.0;
    for x in images {
        let traj = model.trajectory(x, panels).map_err(err)?;
        let (first, last) = (
            model.translate(x, 0.0).map_err(err)?,
            model.translate(x, 1.0).map_err(err)?,
        );
        ensure(traj[0] == first, || {
            "θ=0 panel differs from translate(x, 0)".into()
        })?;
        ensure(traj[panels - 1] == last, || {
            "θ=1 panel differs from translate(x, 1)".into()
        })?;
        let endpoint = max_jump(&first, &last);
        let adjacent = traj
            .windows(2)
            .map(|w| max_jump(&w[0], &w[1]))
            .fold(0.0, f64::max);
        ensure(adjacent < endpoint, || {
            format!("adjacent jump {adjacent:.4} ≥ endpoint jump {endpoint:.4}")
        })?;
        worst_ratio = worst_ratio.max(adjacent / endpoint);
    }
    Ok(format!("{} eval images, {panels} panels: endpoints bitwise equal, max adjacent/endpoint jump ratio {worst_ratio:.3}", images.len()))
}
