use pathbone_tape::fd::{input_gradient, max_relative_error, param_gradient};
use pathbone_tape::{Graph, ParamStore, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Checks d(sum(w ⊙ f(x)))/dx against central differences, with a fixed
/// random weighting `w` so that every output element matters.
fn check_unary(shape: &[usize], seed: u64, f: impl for<'g> Fn(Var<'g, f64>) -> Var<'g, f64>) {
    let x = random(shape, seed);
    let probe_shape = {
        let g = Graph::<f64>::new();
        f(g.variable(x.clone())).shape()
    };
    let weights = random(&probe_shape, seed + 1);
    let eval = |input: &Tensor<f64>| {
        let g = Graph::<f64>::new();
        let y = f(g.constant(input.clone()));
        (y * g.constant(weights.clone())).sum().item()
    };
    let g = Graph::<f64>::new();
    let xv = g.variable(x.clone());
    let loss = (f(xv) * g.constant(weights.clone())).sum();
    let grads = g.backward(loss);
    let analytic = grads.wrt(xv).expect("input gradient").clone();
    let numeric = input_gradient(&x, 1e-6, eval);
    let err = max_relative_error(&analytic, &numeric, 1e-6);
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn elementwise_ops() {
    check_unary(&[2, 3], 1, |x| x.tanh());
    check_unary(&[2, 3], 2, |x| x.sigmoid());
    check_unary(&[2, 3], 3, |x| x.exp());
    check_unary(&[2, 3], 4, |x| x.square());
    check_unary(&[2, 3], 5, |x| x.abs());
    check_unary(&[2, 3], 6, |x| x.relu());
    check_unary(&[2, 3], 7, |x| x.leaky_relu(0.2));
    check_unary(&[2, 3], 8, |x| x.scale(-2.5).add_scalar(0.3));
    check_unary(&[2, 3], 9, |x| x * x.tanh() - x.exp());
    check_unary(&[2, 3], 10, |x| x.scale_samples(&[0.5, -3.0]));
    check_unary(&[2, 3], 11, |x| x.reshape([3, 2]).square());
}

#[test]
fn reductions() {
    check_unary(&[2, 2, 3, 3], 20, |x| x.square().mean());
    check_unary(&[2, 2, 3, 3], 21, |x| x.tanh().sum());
}

#[test]
fn conv2d_input_gradients() {
    for (k, stride, pad) in [(3, 1, 1), (4, 2, 1), (1, 1, 0), (3, 2, 0)] {
        let w = random(&[3, 2, k, k], 30 + k as u64);
        check_unary(&[2, 2, 6, 6], 40 + k as u64, move |x| {
            let wv = x.graph().constant(w.clone());
            x.conv2d(wv, None, stride, pad)
        });
    }
}

#[test]
fn conv2d_and_linear_parameter_gradients() {
    let mut store = ParamStore::<f64>::new();
    store.insert("m.w", random(&[3, 2, 3, 3], 50));
    store.insert("m.b", random(&[3], 51));
    store.insert("m.lw", random(&[4, 3], 52));
    store.insert("m.lb", random(&[4], 53));
    let x = random(&[2, 2, 5, 5], 54);
    fn loss<'g>(g: &'g Graph<f64>, s: &ParamStore<f64>, x: &Tensor<f64>) -> Var<'g, f64> {
        let h = g
            .constant(x.clone())
            .conv2d(g.param(s, "m.w"), Some(g.param(s, "m.b")), 2, 1)
            .tanh();
        // pool to (N, C) through a mean-preserving reshape trick: average per channel
        let (n, c) = (h.shape()[0], h.shape()[1]);
        let hw = h.shape()[2] * h.shape()[3];
        let pooled = h
            .reshape([n * c, hw])
            .linear(g.constant(Tensor::full([1, hw], 1.0 / hw as f64)), None);
        let feats = pooled.reshape([n, c]);
        feats
            .linear(g.param(s, "m.lw"), Some(g.param(s, "m.lb")))
            .square()
            .mean()
    }
    let g = Graph::new();
    let l = loss(&g, &store, &x);
    let grads = g.backward(l);
    for name in ["m.w", "m.b", "m.lw", "m.lb"] {
        let numeric = param_gradient(&store, name, 1e-6, |s| {
            let g = Graph::new();
            loss(&g, s, &x).item()
        });
        let err = max_relative_error(grads.param(name).unwrap(), &numeric, 1e-6);
        assert!(err < 1e-6, "{name}: relative error {err}");
    }
}

#[test]
fn upsample_film_and_norm() {
    check_unary(&[2, 2, 3, 3], 60, |x| x.upsample2x().square());
    check_unary(&[2, 3, 4, 4], 61, |x| x.instance_norm(1e-5).tanh());
    let scale = random(&[2, 3], 62);
    let shift = random(&[2, 3], 63);
    check_unary(&[2, 3, 2, 2], 64, move |x| {
        let g = x.graph();
        x.film(g.constant(scale.clone()), g.constant(shift.clone()))
            .square()
    });
    let x = random(&[2, 3, 2, 2], 65);
    check_unary(&[2, 3], 66, move |s| {
        let g = s.graph();
        g.constant(x.clone()).film(s.tanh(), s.square()).sum()
    });
}

#[test]
fn sobel_magnitude_gradient() {
    // values well inside [0, 1] keep the clamp inactive and the magnitude nonzero
    let x = random(&[1, 1, 6, 7], 70).map(|v| 0.5 + 0.2 * v);
    let weights = random(&[1, 1, 6, 7], 71);
    let eval = |input: &Tensor<f64>| {
        let g = Graph::<f64>::new();
        (g.constant(input.clone()).sobel_magnitude() * g.constant(weights.clone()))
            .sum()
            .item()
    };
    let g = Graph::<f64>::new();
    let xv = g.variable(x.clone());
    let loss = (xv.sobel_magnitude() * g.constant(weights.clone())).sum();
    let grads = g.backward(loss);
    let numeric = input_gradient(&x, 1e-7, eval);
    let err = max_relative_error(grads.wrt(xv).unwrap(), &numeric, 1e-6);
    assert!(err < 1e-5, "relative error {err}");
}

fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (n, c, h, wd) = x.dims4();
    let (o, _, kh, kw) = w.dims4();
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros([n, o, ho, wo]);
    for s in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += x.data()
                                        [((s * c + ic) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((oc * c + ic) * kh + ky) * kw + kx];
                                }
                            }
                        }
                    }
                    out.data_mut()[((s * o + oc) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_matches_direct_sum(seed in 0u64..1000, k in 1usize..5, stride in 1usize..3, pad in 0usize..2, h in 4usize..9) {
        let x = random(&[2, 3, h, h + 1], seed);
        let w = random(&[2, 3, k, k], seed + 7);
        let g = Graph::<f64>::new();
        let y = g.constant(x.clone()).conv2d(g.constant(w.clone()), None, stride, pad).value();
        let expect = naive_conv(&x, &w, stride, pad);
        prop_assert_eq!(y.shape(), expect.shape());
        for (a, b) in y.data().iter().zip(expect.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_backward_is_adjoint(seed in 0u64..1000) {
        // <U x, y> == <x, Uᵀ y>
        let x = random(&[1, 2, 3, 4], seed);
        let y = random(&[1, 2, 6, 8], seed + 1);
        let g = Graph::<f64>::new();
        let xv = g.variable(x.clone());
        let lhs = (xv.upsample2x() * g.constant(y.clone())).sum();
        let l = lhs.item();
        let grads = g.backward(lhs);
        let r: f64 = grads.wrt(xv).unwrap().data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        prop_assert!((l - r).abs() < 1e-10);
    }
}

#[test]
fn frozen_parameters_receive_no_gradient() {
    let mut store = ParamStore::<f64>::new();
    store.insert("a.w", Tensor::new([2], vec![1.0, 2.0]));
    store.insert("b.w", Tensor::new([2], vec![3.0, 4.0]));
    let g = Graph::with_trainable(&["a"]);
    let loss = (g.param(&store, "a.w") * g.param(&store, "b.w")).sum();
    let grads = g.backward(loss);
    assert_eq!(grads.param("a.w").unwrap().data(), &[3.0, 4.0]);
    assert!(grads.param("b.w").is_none());
    assert_eq!(grads.param_count(), 1);
}

#[test]
fn detach_blocks_gradient_flow() {
    let g = Graph::<f64>::new();
    let x = g.variable(Tensor::new([1], vec![2.0]));
    let y = x.square().detach() + x;
    let grads = g.backward(y.sum());
    assert_eq!(grads.wrt(x).unwrap().data(), &[1.0]);
}

#[test]
fn shared_parameter_gradients_accumulate() {
    let mut store = ParamStore::<f64>::new();
    store.insert("p.w", Tensor::new([1], vec![3.0]));
    let g = Graph::new();
    let a = g.param(&store, "p.w");
    let b = g.param(&store, "p.w");
    let grads = g.backward((a * b).sum());
    assert_eq!(grads.param("p.w").unwrap().data(), &[6.0]);
}

#[test]
fn f32_graph_runs_the_same_ops() {
    let g = Graph::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = g.variable(Tensor::from_fn([1, 1, 4, 4], |_| {
        rng.random_range(0.0..1.0)
    }));
    let w = g.constant(Tensor::full([2, 1, 3, 3], 0.1f32));
    let y = x
        .conv2d(w, None, 1, 1)
        .upsample2x()
        .sobel_magnitude()
        .mean();
    let grads = g.backward(y);
    assert!(grads.wrt(x).unwrap().all_finite());
}
