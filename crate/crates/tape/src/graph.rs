use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::kernels::{self, ConvGeom};
use crate::{ParamStore, Scalar, Tensor};

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    ScaleSamples(usize, Vec<T>),
    Relu(usize),
    LeakyRelu(usize, T),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Abs(usize),
    Square(usize),
    Mean(usize),
    Sum(usize),
    Reshape(usize),
    Conv2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        stride: usize,
        pad: usize,
    },
    Linear {
        input: usize,
        weight: usize,
        bias: Option<usize>,
    },
    Upsample2x(usize),
    Film {
        input: usize,
        scale: usize,
        shift: usize,
    },
    Sobel(usize),
    InstanceNorm(usize, T),
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
    param: Option<String>,
}

/// Which parameters a graph records gradients for.
#[derive(Clone, Debug)]
enum Trainable {
    All,
    Nothing,
    Prefixes(Vec<String>),
}

/// Define-by-run tape. Build a fresh graph for every forward pass.
///
/// Parameters bound through [`Graph::param`] only receive gradients when
/// their name matches the graph's trainable set; every other parameter
/// enters the tape as a constant, so it is impossible for an update to
/// leak into a frozen network.
pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    trainable: Trainable,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T: Scalar> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    /// Graph in which every bound parameter is trainable.
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            trainable: Trainable::All,
        }
    }

    /// Graph in which every bound parameter is a constant.
    pub fn frozen() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            trainable: Trainable::Nothing,
        }
    }

    /// Only parameters whose name starts with `<prefix>.` for one of the
    /// given prefixes are trainable.
    pub fn with_trainable(prefixes: &[&str]) -> Self {
        let prefixes = prefixes.iter().map(|p| format!("{p}.")).collect();
        Self {
            nodes: RefCell::new(Vec::new()),
            trainable: Trainable::Prefixes(prefixes),
        }
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        match &self.trainable {
            Trainable::All => true,
            Trainable::Nothing => false,
            Trainable::Prefixes(p) => p.iter().any(|p| name.starts_with(p.as_str())),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var<'_, T> {
        self.push_arc(Arc::new(value), op, needs_grad, None)
    }

    fn push_arc(
        &self,
        value: Arc<Tensor<T>>,
        op: Op<T>,
        needs_grad: bool,
        param: Option<String>,
    ) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        // ops whose inputs are all constant collapse to constants
        let op = if needs_grad { op } else { Op::Leaf };
        nodes.push(Node {
            value,
            op,
            needs_grad,
            param,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    /// Records a free leaf that does receive a gradient (test inputs,
    /// sensitivity probes).
    pub fn variable(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a named parameter from `store`.
    ///
    /// Panics when the store has no such parameter: the networks own their
    /// parameter names, so a miss is a programming error.
    pub fn param(&self, store: &ParamStore<T>, name: &str) -> Var<'_, T> {
        let value = store
            .get_arc(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from store"));
        let trainable = self.is_trainable(name);
        self.push_arc(
            value,
            Op::Leaf,
            trainable,
            trainable.then(|| name.to_string()),
        )
    }

    fn value_of(&self, id: usize) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Gradients<T> {
        assert!(
            std::ptr::eq(loss.graph, self),
            "loss belongs to another graph"
        );
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[loss.id].value.numel(),
            1,
            "backward() needs a scalar loss"
        );
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        if nodes[loss.id].needs_grad {
            grads[loss.id] = Some(Tensor::ones(nodes[loss.id].value.shape().to_vec()));
        }

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[id].take() else { continue };
            let y = &node.value;
            let mut send = |target: usize, g: Tensor<T>| {
                if !nodes[target].needs_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            };
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    send(*a, dy.clone());
                    send(*b, dy);
                }
                Op::Sub(a, b) => {
                    send(*b, dy.map(|v| -v));
                    send(*a, dy);
                }
                Op::Mul(a, b) => {
                    if nodes[*a].needs_grad {
                        send(*a, dy.zip_map(val(*b), |d, v| d * v));
                    }
                    if nodes[*b].needs_grad {
                        send(*b, dy.zip_map(val(*a), |d, v| d * v));
                    }
                }
                Op::Scale(a, s) => send(*a, dy.map(|v| v * *s)),
                Op::AddScalar(a) => send(*a, dy),
                Op::ScaleSamples(a, f) => {
                    let per = dy.numel() / f.len();
                    let mut g = dy;
                    for (chunk, &s) in g.data_mut().chunks_mut(per).zip(f) {
                        chunk.iter_mut().for_each(|v| *v *= s);
                    }
                    send(*a, g);
                }
                Op::Relu(a) => send(
                    *a,
                    dy.zip_map(val(*a), |d, x| if x > T::zero() { d } else { T::zero() }),
                ),
                Op::LeakyRelu(a, slope) => send(
                    *a,
                    dy.zip_map(val(*a), |d, x| if x > T::zero() { d } else { d * *slope }),
                ),
                Op::Tanh(a) => send(*a, dy.zip_map(y, |d, t| d * (T::one() - t * t))),
                Op::Sigmoid(a) => send(*a, dy.zip_map(y, |d, s| d * s * (T::one() - s))),
                Op::Exp(a) => send(*a, dy.zip_map(y, |d, e| d * e)),
                Op::Abs(a) => send(
                    *a,
                    dy.zip_map(val(*a), |d, x| {
                        if x > T::zero() {
                            d
                        } else if x < T::zero() {
                            -d
                        } else {
                            T::zero()
                        }
                    }),
                ),
                Op::Square(a) => send(*a, dy.zip_map(val(*a), |d, x| d * (x + x))),
                Op::Mean(a) => {
                    let n = T::from_usize(val(*a).numel()).unwrap();
                    send(*a, Tensor::full(val(*a).shape().to_vec(), dy.item() / n));
                }
                Op::Sum(a) => send(*a, Tensor::full(val(*a).shape().to_vec(), dy.item())),
                Op::Reshape(a) => send(*a, dy.reshape(val(*a).shape().to_vec())),
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    stride,
                    pad,
                } => {
                    let want = (
                        nodes[*input].needs_grad,
                        nodes[*weight].needs_grad,
                        bias.is_some_and(|b| nodes[b].needs_grad),
                    );
                    let (dx, dw, db) = kernels::conv2d_backward(
                        val(*input),
                        val(*weight),
                        &dy,
                        *stride,
                        *pad,
                        want,
                    );
                    if let Some(dx) = dx {
                        send(*input, dx);
                    }
                    if let Some(dw) = dw {
                        send(*weight, dw);
                    }
                    if let (Some(db), Some(b)) = (db, bias) {
                        send(*b, db);
                    }
                }
                Op::Linear {
                    input,
                    weight,
                    bias,
                } => {
                    let (n, o) = dy.dims2();
                    let (_, i) = val(*input).dims2();
                    if nodes[*input].needs_grad {
                        let mut dx = vec![T::zero(); n * i];
                        crate::scalar::gemm(
                            n,
                            o,
                            i,
                            dy.data(),
                            false,
                            val(*weight).data(),
                            false,
                            &mut dx,
                            false,
                        );
                        send(*input, Tensor::new([n, i], dx));
                    }
                    if nodes[*weight].needs_grad {
                        let mut dw = vec![T::zero(); o * i];
                        crate::scalar::gemm(
                            o,
                            n,
                            i,
                            dy.data(),
                            true,
                            val(*input).data(),
                            false,
                            &mut dw,
                            false,
                        );
                        send(*weight, Tensor::new([o, i], dw));
                    }
                    if let Some(b) = bias {
                        let mut db = vec![T::zero(); o];
                        for row in dy.data().chunks(o) {
                            for (acc, &v) in db.iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                        send(*b, Tensor::new([o], db));
                    }
                }
                Op::Upsample2x(a) => send(*a, kernels::upsample2x_backward(&dy)),
                Op::Film {
                    input,
                    scale,
                    shift,
                } => {
                    let x = val(*input);
                    let (_, _, h, w) = x.dims4();
                    let s = val(*scale);
                    if nodes[*input].needs_grad {
                        let mut dx = dy.clone();
                        for (p, plane) in dx.data_mut().chunks_mut(h * w).enumerate() {
                            let f = T::one() + s.data()[p];
                            plane.iter_mut().for_each(|v| *v *= f);
                        }
                        send(*input, dx);
                    }
                    if nodes[*scale].needs_grad {
                        let ds: Vec<T> = dy
                            .data()
                            .chunks(h * w)
                            .zip(x.data().chunks(h * w))
                            .map(|(d, xv)| d.iter().zip(xv).map(|(&a, &b)| a * b).sum())
                            .collect();
                        send(*scale, Tensor::new(s.shape().to_vec(), ds));
                    }
                    if nodes[*shift].needs_grad {
                        let dt: Vec<T> = dy
                            .data()
                            .chunks(h * w)
                            .map(|d| d.iter().copied().sum())
                            .collect();
                        send(*shift, Tensor::new(s.shape().to_vec(), dt));
                    }
                }
                Op::Sobel(a) => send(*a, kernels::sobel_backward(val(*a), &dy)),
                Op::InstanceNorm(a, eps) => {
                    send(*a, kernels::instance_norm_backward(val(*a), &dy, *eps))
                }
            }
        }

        let mut params = BTreeMap::new();
        let mut leaves = Vec::with_capacity(nodes.len());
        for (node, grad) in nodes.iter().zip(grads) {
            match (&node.param, grad) {
                (Some(name), Some(g)) => {
                    match params.get_mut(name) {
                        Some(acc) => Tensor::add_assign(acc, &g),
                        None => {
                            params.insert(name.clone(), g);
                        }
                    }
                    leaves.push(None);
                }
                (_, g) => leaves.push(g),
            }
        }
        Gradients { leaves, params }
    }
}

/// Result of [`Graph::backward`]: per-parameter gradients plus the
/// gradients of free variables.
#[derive(Debug)]
pub struct Gradients<T> {
    leaves: Vec<Option<Tensor<T>>>,
    params: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a [`Graph::variable`] leaf, if it was reached.
    pub fn wrt(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.leaves.get(var.id).and_then(|g| g.as_ref())
    }

    /// Accumulated gradient of a named parameter (summed over every binding).
    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Arc<Tensor<T>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Value of a one-element var.
    pub fn item(&self) -> T {
        self.graph.nodes.borrow()[self.id].value.item()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.needs(self.id)
    }

    fn same_graph(&self, other: &Var<'g, T>) {
        assert!(
            std::ptr::eq(self.graph, other.graph),
            "vars belong to different graphs"
        );
    }

    fn unary(self, value: Tensor<T>, op: Op<T>) -> Var<'g, T> {
        let needs = self.requires_grad();
        self.graph.push(value, op, needs)
    }

    fn binary(self, other: Var<'g, T>, value: Tensor<T>, op: Op<T>) -> Var<'g, T> {
        self.same_graph(&other);
        let needs = self.requires_grad() || other.requires_grad();
        self.graph.push(value, op, needs)
    }

    /// Same value, cut from the tape.
    pub fn detach(self) -> Var<'g, T> {
        self.graph.push_arc(self.value(), Op::Leaf, false, None)
    }

    pub fn add(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = self.value().zip_map(&other.value(), |a, b| a + b);
        self.binary(other, v, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = self.value().zip_map(&other.value(), |a, b| a - b);
        self.binary(other, v, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = self.value().zip_map(&other.value(), |a, b| a * b);
        self.binary(other, v, Op::Mul(self.id, other.id))
    }

    pub fn scale(self, s: f64) -> Var<'g, T> {
        let s = T::from_f64_lossy(s);
        let v = self.value().map(|a| a * s);
        self.unary(v, Op::Scale(self.id, s))
    }

    pub fn add_scalar(self, s: f64) -> Var<'g, T> {
        let s = T::from_f64_lossy(s);
        let v = self.value().map(|a| a + s);
        self.unary(v, Op::AddScalar(self.id))
    }

    /// Multiplies every element of sample `n` (leading axis) by `factors[n]`.
    pub fn scale_samples(self, factors: &[T]) -> Var<'g, T> {
        let value = self.value();
        let n = value.shape()[0];
        assert_eq!(
            factors.len(),
            n,
            "scale_samples needs one factor per sample"
        );
        let per = value.numel() / n;
        let mut out = (*value).clone();
        for (chunk, &f) in out.data_mut().chunks_mut(per).zip(factors) {
            chunk.iter_mut().for_each(|v| *v *= f);
        }
        self.unary(out, Op::ScaleSamples(self.id, factors.to_vec()))
    }

    pub fn relu(self) -> Var<'g, T> {
        let v = self.value().map(|a| a.max(T::zero()));
        self.unary(v, Op::Relu(self.id))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g, T> {
        let s = T::from_f64_lossy(slope);
        let v = self.value().map(|a| if a > T::zero() { a } else { a * s });
        self.unary(v, Op::LeakyRelu(self.id, s))
    }

    pub fn tanh(self) -> Var<'g, T> {
        let v = self.value().map(|a| a.tanh());
        self.unary(v, Op::Tanh(self.id))
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        let v = self.value().map(|a| T::one() / (T::one() + (-a).exp()));
        self.unary(v, Op::Sigmoid(self.id))
    }

    pub fn exp(self) -> Var<'g, T> {
        let v = self.value().map(|a| a.exp());
        self.unary(v, Op::Exp(self.id))
    }

    pub fn abs(self) -> Var<'g, T> {
        let v = self.value().map(|a| a.abs());
        self.unary(v, Op::Abs(self.id))
    }

    pub fn square(self) -> Var<'g, T> {
        let v = self.value().map(|a| a * a);
        self.unary(v, Op::Square(self.id))
    }

    /// Mean over all elements, as a rank-0 var.
    pub fn mean(self) -> Var<'g, T> {
        let v = Tensor::scalar(self.value().mean());
        self.unary(v, Op::Mean(self.id))
    }

    /// Sum over all elements, as a rank-0 var.
    pub fn sum(self) -> Var<'g, T> {
        let v = Tensor::scalar(self.value().sum());
        self.unary(v, Op::Sum(self.id))
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Var<'g, T> {
        let v = (*self.value()).clone().reshape(shape);
        self.unary(v, Op::Reshape(self.id))
    }

    /// 2-d cross-correlation with zero padding; weight is `(O, C, kh, kw)`.
    pub fn conv2d(
        self,
        weight: Var<'g, T>,
        bias: Option<Var<'g, T>>,
        stride: usize,
        pad: usize,
    ) -> Var<'g, T> {
        self.same_graph(&weight);
        let b_val = bias.map(|b| {
            self.same_graph(&b);
            b.value()
        });
        let v = kernels::conv2d_forward(
            &self.value(),
            &weight.value(),
            b_val.as_deref(),
            stride,
            pad,
        );
        let needs = self.requires_grad()
            || weight.requires_grad()
            || bias.is_some_and(|b| b.requires_grad());
        let op = Op::Conv2d {
            input: self.id,
            weight: weight.id,
            bias: bias.map(|b| b.id),
            stride,
            pad,
        };
        self.graph.push(v, op, needs)
    }

    /// Output spatial size of a conv applied to this var.
    pub fn conv_output_hw(&self, kernel: usize, stride: usize, pad: usize) -> (usize, usize) {
        let shape = self.shape();
        let g = ConvGeom::new(&shape, &[1, shape[1], kernel, kernel], stride, pad);
        (g.ho, g.wo)
    }

    /// `x · Wᵀ + b` with `x: (N, I)` and `W: (O, I)`.
    pub fn linear(self, weight: Var<'g, T>, bias: Option<Var<'g, T>>) -> Var<'g, T> {
        self.same_graph(&weight);
        let b_val = bias.map(|b| b.value());
        let v = kernels::linear_forward(&self.value(), &weight.value(), b_val.as_deref());
        let needs = self.requires_grad()
            || weight.requires_grad()
            || bias.is_some_and(|b| b.requires_grad());
        let op = Op::Linear {
            input: self.id,
            weight: weight.id,
            bias: bias.map(|b| b.id),
        };
        self.graph.push(v, op, needs)
    }

    /// Nearest-neighbour ×2 upsampling of an NCHW var.
    pub fn upsample2x(self) -> Var<'g, T> {
        let v = kernels::upsample2x_forward(&self.value());
        self.unary(v, Op::Upsample2x(self.id))
    }

    /// `x · (1 + scale) + shift` with `(N, C)` modulation tensors.
    pub fn film(self, scale: Var<'g, T>, shift: Var<'g, T>) -> Var<'g, T> {
        self.same_graph(&scale);
        self.same_graph(&shift);
        let v = kernels::film_forward(&self.value(), &scale.value(), &shift.value());
        let needs = self.requires_grad() || scale.requires_grad() || shift.requires_grad();
        let op = Op::Film {
            input: self.id,
            scale: scale.id,
            shift: shift.id,
        };
        self.graph.push(v, op, needs)
    }

    /// Per-plane Sobel gradient magnitude `clamp(|∇x| / 4, 0, 1)` with
    /// replicate padding. Inputs are expected in `[0, 1]`.
    pub fn sobel_magnitude(self) -> Var<'g, T> {
        let v = kernels::sobel_forward(&self.value());
        self.unary(v, Op::Sobel(self.id))
    }

    /// Per-sample, per-channel normalization over the spatial axes.
    pub fn instance_norm(self, eps: f64) -> Var<'g, T> {
        let eps = T::from_f64_lossy(eps);
        let v = kernels::instance_norm_forward(&self.value(), eps);
        self.unary(v, Op::InstanceNorm(self.id, eps))
    }
}

impl<'g, T: Scalar> std::ops::Add for Var<'g, T> {
    type Output = Var<'g, T>;
    fn add(self, rhs: Self) -> Self::Output {
        Var::add(self, rhs)
    }
}

impl<'g, T: Scalar> std::ops::Sub for Var<'g, T> {
    type Output = Var<'g, T>;
    fn sub(self, rhs: Self) -> Self::Output {
        Var::sub(self, rhs)
    }
}

impl<'g, T: Scalar> std::ops::Mul for Var<'g, T> {
    type Output = Var<'g, T>;
    fn mul(self, rhs: Self) -> Self::Output {
        Var::mul(self, rhs)
    }
}

impl<'g, T: Scalar> std::ops::Neg for Var<'g, T> {
    type Output = Var<'g, T>;
    fn neg(self) -> Self::Output {
        self.scale(-1.0)
    }
}
