//! Reverse-mode differentiation over a recorded operation graph.
//!
//! A [`Graph`] is built eagerly: each builder call runs the primitive right
//! away and records the node, so construction order is a valid topological
//! order. [`Graph::backward`] then pushes a seed (the vector in a
//! vector-Jacobian product) from one output node back to every parameter and
//! marked input.

use crate::scalar::{sigmoid_scalar, Scalar};
use crate::tensor::Tensor;
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("shape mismatch between {a:?} and {b:?} in {op}")]
    ShapeMismatch {
        op: &'static str,
        a: Vec<usize>,
        b: Vec<usize>,
    },
    #[error("{op} expects rank {want}, got shape {shape:?}")]
    BadRank {
        op: &'static str,
        want: usize,
        shape: Vec<usize>,
    },
    #[error("seed shape {seed:?} does not match output shape {output:?}")]
    SeedMismatch {
        seed: Vec<usize>,
        output: Vec<usize>,
    },
    #[error("invalid axis {axis} for shape {shape:?}")]
    BadAxis { axis: usize, shape: Vec<usize> },
    #[error("{0}")]
    Invalid(&'static str),
}

#[derive(Clone, Debug)]
enum Op<S> {
    Const,
    Input,
    Param(usize),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, S),
    MatVec(NodeId, NodeId),
    Conv2d {
        image: NodeId,
        kernel: NodeId,
        bias: NodeId,
    },
    MaxPool2(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Concat(NodeId, NodeId),
    MeanAxis(NodeId, usize),
    Sum(NodeId),
    Reshape(NodeId),
    /// Per-pixel scalar mask applied to every channel of an image.
    PixelMask {
        mask: NodeId,
        image: NodeId,
    },
}

struct Node<S> {
    op: Op<S>,
    value: Tensor<S>,
    needs_grad: bool,
}

/// Gradients returned by [`Graph::backward`], indexed by node id.
pub struct Gradients<S = f64> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn node(&self, id: NodeId) -> Option<&Tensor<S>> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<S>> {
        self.grads.get_mut(id).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Graph<S = f64> {
    nodes: Vec<Node<S>>,
    params: Vec<(usize, NodeId)>,
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        Graph {
            nodes: Vec::with_capacity(n),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id].value
    }

    /// Parameter bindings recorded by [`Graph::param`], in binding order.
    pub fn param_bindings(&self) -> &[(usize, NodeId)] {
        &self.params
    }

    /// Parameter slot bound at a leaf node, if any.
    pub fn param_id(&self, id: NodeId) -> Option<usize> {
        match self.nodes[id].op {
            Op::Param(p) => Some(p),
            _ => None,
        }
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>, needs_grad: bool) -> NodeId {
        debug_assert!(value.all_finite(), "non-finite value out of {op:?}");
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    pub fn constant(&mut self, value: Tensor<S>) -> NodeId {
        self.push(Op::Const, value, false)
    }

    /// Leaf whose gradient is requested (pixels, mask, sequence inputs...).
    pub fn input(&mut self, value: Tensor<S>) -> NodeId {
        self.push(Op::Input, value, true)
    }

    /// Leaf bound to parameter slot `param_id` of the owning parameter set.
    pub fn param(&mut self, param_id: usize, value: Tensor<S>) -> NodeId {
        let id = self.push(Op::Param(param_id), value, true);
        self.params.push((param_id, id));
        id
    }

    fn binary_elementwise(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(S, S) -> S,
    ) -> Result<(Tensor<S>, bool), GraphError> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.shape() != tb.shape() {
            return Err(GraphError::ShapeMismatch {
                op: op_name,
                a: ta.shape().to_vec(),
                b: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("shape checked");
        Ok((value, self.needs(a) || self.needs(b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (value, needs) = self.binary_elementwise("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), value, needs))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (value, needs) = self.binary_elementwise("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), value, needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (value, needs) = self.binary_elementwise("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), value, needs))
    }

    pub fn scale(&mut self, a: NodeId, k: S) -> NodeId {
        let value = self.nodes[a].value.map(|v| v * k);
        let needs = self.needs(a);
        self.push(Op::Scale(a, k), value, needs)
    }

    /// weight [m, k] times vector [k] -> [m]
    pub fn matvec(&mut self, weight: NodeId, x: NodeId) -> Result<NodeId, GraphError> {
        let tw = &self.nodes[weight].value;
        let tx = &self.nodes[x].value;
        if tw.rank() != 2 {
            return Err(GraphError::BadRank {
                op: "matvec",
                want: 2,
                shape: tw.shape().to_vec(),
            });
        }
        let (m, k) = (tw.shape()[0], tw.shape()[1]);
        if tx.rank() != 1 || tx.shape()[0] != k {
            return Err(GraphError::ShapeMismatch {
                op: "matvec",
                a: tw.shape().to_vec(),
                b: tx.shape().to_vec(),
            });
        }
        let w = tw.data();
        let xv = tx.data();
        let mut out = vec![S::zero(); m];
        for i in 0..m {
            let row = &w[i * k..(i + 1) * k];
            out[i] = row.iter().zip(xv).map(|(&a, &b)| a * b).sum();
        }
        let needs = self.needs(weight) || self.needs(x);
        let value = Tensor::new(vec![m], out).expect("matvec shape");
        Ok(self.push(Op::MatVec(weight, x), value, needs))
    }

    /// Affine layer: weight [m, k] * x [k] + bias [m].
    pub fn dense(&mut self, weight: NodeId, bias: NodeId, x: NodeId) -> Result<NodeId, GraphError> {
        let wx = self.matvec(weight, x)?;
        self.add(wx, bias)
    }

    /// 2-D convolution, stride 1, zero-padded to the input extents.
    /// image [H, W, Ci], kernel [kh, kw, Ci, Co] (odd kh/kw), bias [Co].
    pub fn conv2d(
        &mut self,
        image: NodeId,
        kernel: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, GraphError> {
        let ti = &self.nodes[image].value;
        let tk = &self.nodes[kernel].value;
        let tb = &self.nodes[bias].value;
        if ti.rank() != 3 {
            return Err(GraphError::BadRank {
                op: "conv2d",
                want: 3,
                shape: ti.shape().to_vec(),
            });
        }
        if tk.rank() != 4 {
            return Err(GraphError::BadRank {
                op: "conv2d",
                want: 4,
                shape: tk.shape().to_vec(),
            });
        }
        let ci = ti.shape()[2];
        let (kh, kw, kci, co) = (tk.shape()[0], tk.shape()[1], tk.shape()[2], tk.shape()[3]);
        if kci != ci || kh % 2 == 0 || kw % 2 == 0 {
            return Err(GraphError::ShapeMismatch {
                op: "conv2d",
                a: ti.shape().to_vec(),
                b: tk.shape().to_vec(),
            });
        }
        if tb.shape() != [co] {
            return Err(GraphError::ShapeMismatch {
                op: "conv2d bias",
                a: vec![co],
                b: tb.shape().to_vec(),
            });
        }
        let value = conv2d_forward(ti, tk, tb);
        let needs = self.needs(image) || self.needs(kernel) || self.needs(bias);
        Ok(self.push(
            Op::Conv2d {
                image,
                kernel,
                bias,
            },
            value,
            needs,
        ))
    }

    /// 2x2 max pooling with stride 2; trailing odd rows/columns are dropped.
    pub fn max_pool2(&mut self, input: NodeId) -> Result<NodeId, GraphError> {
        let ti = &self.nodes[input].value;
        if ti.rank() != 3 {
            return Err(GraphError::BadRank {
                op: "max_pool2",
                want: 3,
                shape: ti.shape().to_vec(),
            });
        }
        let (h, w, c) = (ti.shape()[0], ti.shape()[1], ti.shape()[2]);
        if h < 2 || w < 2 {
            return Err(GraphError::Invalid("max_pool2 needs extents >= 2"));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![S::neg_infinity(); oh * ow * c];
        let data = ti.data();
        for y in 0..oh {
            for x in 0..ow {
                for dy in 0..2 {
                    for dx in 0..2 {
                        let base = ((2 * y + dy) * w + 2 * x + dx) * c;
                        let obase = (y * ow + x) * c;
                        for ch in 0..c {
                            let v = data[base + ch];
                            if v > out[obase + ch] {
                                out[obase + ch] = v;
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![oh, ow, c], out).expect("pool shape");
        let needs = self.needs(input);
        Ok(self.push(Op::MaxPool2(input), value, needs))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let value = self.nodes[input].value.map(|v| v.max(S::zero()));
        let needs = self.needs(input);
        self.push(Op::Relu(input), value, needs)
    }

    pub fn tanh(&mut self, input: NodeId) -> NodeId {
        let value = self.nodes[input].value.map(|v| v.tanh());
        let needs = self.needs(input);
        self.push(Op::Tanh(input), value, needs)
    }

    /// Elementwise logistic; gradient is s(y)(1 - s(y)).
    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let value = self.nodes[input].value.map(sigmoid_scalar);
        let needs = self.needs(input);
        self.push(Op::Sigmoid(input), value, needs)
    }

    /// Concatenation of two vectors.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.rank() != 1 || tb.rank() != 1 {
            return Err(GraphError::BadRank {
                op: "concat",
                want: 1,
                shape: ta.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        data.extend_from_slice(ta.data());
        data.extend_from_slice(tb.data());
        let value = Tensor::new(vec![ta.len() + tb.len()], data).expect("concat shape");
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Concat(a, b), value, needs))
    }

    /// Mean over one axis; the axis disappears from the shape.
    pub fn mean_axis(&mut self, input: NodeId, axis: usize) -> Result<NodeId, GraphError> {
        let ti = &self.nodes[input].value;
        if axis >= ti.rank() || ti.rank() < 2 {
            return Err(GraphError::BadAxis {
                axis,
                shape: ti.shape().to_vec(),
            });
        }
        let shape = ti.shape();
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![S::zero(); outer * inner];
        let data = ti.data();
        let inv = S::from_f64_lossy(1.0 / mid as f64);
        for o in 0..outer {
            for m in 0..mid {
                let base = (o * mid + m) * inner;
                let obase = o * inner;
                for i in 0..inner {
                    out[obase + i] += data[base + i];
                }
            }
        }
        for v in &mut out {
            *v *= inv;
        }
        let mut oshape: Vec<usize> = shape[..axis].to_vec();
        oshape.extend_from_slice(&shape[axis + 1..]);
        let value = Tensor::new(oshape, out).expect("mean shape");
        let needs = self.needs(input);
        Ok(self.push(Op::MeanAxis(input, axis), value, needs))
    }

    /// Sum of all elements, as a [1] tensor.
    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let s: S = self.nodes[input].value.data().iter().copied().sum();
        let needs = self.needs(input);
        self.push(Op::Sum(input), Tensor::scalar(s), needs)
    }

    pub fn reshape(&mut self, input: NodeId, shape: &[usize]) -> Result<NodeId, GraphError> {
        let value = self.nodes[input]
            .value
            .reshaped(shape)
            .map_err(|_| GraphError::Invalid("reshape element count mismatch"))?;
        let needs = self.needs(input);
        Ok(self.push(Op::Reshape(input), value, needs))
    }

    /// mask [H, W] applied multiplicatively to all channels of image [H, W, C].
    pub fn pixel_mask(&mut self, mask: NodeId, image: NodeId) -> Result<NodeId, GraphError> {
        let tm = &self.nodes[mask].value;
        let ti = &self.nodes[image].value;
        if tm.rank() != 2 || ti.rank() != 3 || tm.shape() != &ti.shape()[..2] {
            return Err(GraphError::ShapeMismatch {
                op: "pixel_mask",
                a: tm.shape().to_vec(),
                b: ti.shape().to_vec(),
            });
        }
        let c = ti.shape()[2];
        let mut out = Vec::with_capacity(ti.len());
        for (p, &mv) in tm.data().iter().enumerate() {
            for ch in 0..c {
                out.push(mv * ti.data()[p * c + ch]);
            }
        }
        let value = Tensor::new(ti.shape().to_vec(), out).expect("mask shape");
        let needs = self.needs(mask) || self.needs(image);
        Ok(self.push(Op::PixelMask { mask, image }, value, needs))
    }

    /// Vector-Jacobian product: pushes `seed` at `output` back to every
    /// parameter and input leaf that can reach it.
    pub fn backward(&self, output: NodeId, seed: &Tensor<S>) -> Result<Gradients<S>, GraphError> {
        self.backward_multi(std::iter::once((output, seed)))
    }

    /// Vector-Jacobian product seeded at several output nodes at once; the
    /// result is the sum of the per-output products.
    pub fn backward_multi<'a>(
        &self,
        seeds: impl IntoIterator<Item = (NodeId, &'a Tensor<S>)>,
    ) -> Result<Gradients<S>, GraphError>
    where
        S: 'a,
    {
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut top = 0usize;
        let mut any = false;
        for (node, seed) in seeds {
            let out_shape = self.nodes[node].value.shape();
            if seed.shape() != out_shape {
                return Err(GraphError::SeedMismatch {
                    seed: seed.shape().to_vec(),
                    output: out_shape.to_vec(),
                });
            }
            Self::accumulate(&mut grads, node, seed.clone());
            top = top.max(node);
            any = true;
        }
        if !any {
            return Err(GraphError::Invalid("backward needs at least one seed"));
        }
        for id in (0..=top).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(grads: &mut [Option<Tensor<S>>], id: NodeId, delta: Tensor<S>) {
        match &mut grads[id] {
            Some(g) => {
                g.add_assign(&delta).expect("gradient shape");
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, id: NodeId, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        match &self.nodes[id].op {
            Op::Const | Op::Input | Op::Param(_) => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    Self::accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    Self::accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let tb = &self.nodes[*b].value;
                    let d = zip_tensor(g, tb, |gv, bv| gv * bv);
                    Self::accumulate(grads, *a, d);
                }
                if self.needs(*b) {
                    let ta = &self.nodes[*a].value;
                    let d = zip_tensor(g, ta, |gv, av| gv * av);
                    Self::accumulate(grads, *b, d);
                }
            }
            Op::Scale(a, k) => {
                if self.needs(*a) {
                    let k = *k;
                    Self::accumulate(grads, *a, g.map(|v| v * k));
                }
            }
            Op::MatVec(w, x) => {
                let tw = &self.nodes[*w].value;
                let tx = &self.nodes[*x].value;
                let (m, k) = (tw.shape()[0], tw.shape()[1]);
                if self.needs(*w) {
                    let mut dw = vec![S::zero(); m * k];
                    for i in 0..m {
                        let gv = g.data()[i];
                        let row = &mut dw[i * k..(i + 1) * k];
                        for (j, r) in row.iter_mut().enumerate() {
                            *r = gv * tx.data()[j];
                        }
                    }
                    Self::accumulate(grads, *w, Tensor::new(vec![m, k], dw).expect("dw"));
                }
                if self.needs(*x) {
                    let mut dx = vec![S::zero(); k];
                    for i in 0..m {
                        let gv = g.data()[i];
                        let row = &tw.data()[i * k..(i + 1) * k];
                        for (j, d) in dx.iter_mut().enumerate() {
                            *d += gv * row[j];
                        }
                    }
                    Self::accumulate(grads, *x, Tensor::new(vec![k], dx).expect("dx"));
                }
            }
            Op::Conv2d {
                image,
                kernel,
                bias,
            } => {
                let ti = &self.nodes[*image].value;
                let tk = &self.nodes[*kernel].value;
                let (d_img, d_ker, d_bias) = conv2d_backward(
                    ti,
                    tk,
                    g,
                    self.needs(*image),
                    self.needs(*kernel),
                    self.needs(*bias),
                );
                if let Some(d) = d_img {
                    Self::accumulate(grads, *image, d);
                }
                if let Some(d) = d_ker {
                    Self::accumulate(grads, *kernel, d);
                }
                if let Some(d) = d_bias {
                    Self::accumulate(grads, *bias, d);
                }
            }
            Op::MaxPool2(input) => {
                if self.needs(*input) {
                    let ti = &self.nodes[*input].value;
                    let (h, w, c) = (ti.shape()[0], ti.shape()[1], ti.shape()[2]);
                    let (oh, ow) = (h / 2, w / 2);
                    let mut din = vec![S::zero(); ti.len()];
                    let data = ti.data();
                    // winner is the first maximum in (dy, dx) scan order
                    for y in 0..oh {
                        for x in 0..ow {
                            let obase = (y * ow + x) * c;
                            for ch in 0..c {
                                let mut best = S::neg_infinity();
                                let mut best_idx = 0usize;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        let idx = ((2 * y + dy) * w + 2 * x + dx) * c + ch;
                                        if data[idx] > best {
                                            best = data[idx];
                                            best_idx = idx;
                                        }
                                    }
                                }
                                din[best_idx] += g.data()[obase + ch];
                            }
                        }
                    }
                    Self::accumulate(
                        grads,
                        *input,
                        Tensor::new(ti.shape().to_vec(), din).expect("dpool"),
                    );
                }
            }
            Op::Relu(input) => {
                if self.needs(*input) {
                    let ti = &self.nodes[*input].value;
                    let d = zip_tensor(g, ti, |gv, xv| if xv > S::zero() { gv } else { S::zero() });
                    Self::accumulate(grads, *input, d);
                }
            }
            Op::Tanh(input) => {
                if self.needs(*input) {
                    let ty = &self.nodes[id].value;
                    let d = zip_tensor(g, ty, |gv, yv| gv * (S::one() - yv * yv));
                    Self::accumulate(grads, *input, d);
                }
            }
            Op::Sigmoid(input) => {
                if self.needs(*input) {
                    let ty = &self.nodes[id].value;
                    let d = zip_tensor(g, ty, |gv, yv| gv * yv * (S::one() - yv));
                    Self::accumulate(grads, *input, d);
                }
            }
            Op::Concat(a, b) => {
                let na = self.nodes[*a].value.len();
                if self.needs(*a) {
                    let d = Tensor::new(vec![na], g.data()[..na].to_vec()).expect("dconcat");
                    Self::accumulate(grads, *a, d);
                }
                if self.needs(*b) {
                    let nb = self.nodes[*b].value.len();
                    let d = Tensor::new(vec![nb], g.data()[na..].to_vec()).expect("dconcat");
                    Self::accumulate(grads, *b, d);
                }
            }
            Op::MeanAxis(input, axis) => {
                if self.needs(*input) {
                    let ti = &self.nodes[*input].value;
                    let shape = ti.shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let mid = shape[*axis];
                    let inner: usize = shape[*axis + 1..].iter().product();
                    let inv = S::from_f64_lossy(1.0 / mid as f64);
                    let mut din = vec![S::zero(); ti.len()];
                    for o in 0..outer {
                        for m in 0..mid {
                            let base = (o * mid + m) * inner;
                            let gbase = o * inner;
                            for i in 0..inner {
                                din[base + i] = g.data()[gbase + i] * inv;
                            }
                        }
                    }
                    Self::accumulate(
                        grads,
                        *input,
                        Tensor::new(shape.to_vec(), din).expect("dmean"),
                    );
                }
            }
            Op::Sum(input) => {
                if self.needs(*input) {
                    let ti = &self.nodes[*input].value;
                    let gv = g.data()[0];
                    Self::accumulate(grads, *input, Tensor::filled(ti.shape(), gv));
                }
            }
            Op::Reshape(input) => {
                if self.needs(*input) {
                    let shape = self.nodes[*input].value.shape().to_vec();
                    let d = Tensor::new(shape, g.data().to_vec()).expect("dreshape");
                    Self::accumulate(grads, *input, d);
                }
            }
            Op::PixelMask { mask, image } => {
                let ti = &self.nodes[*image].value;
                let c = ti.shape()[2];
                if self.needs(*mask) {
                    let tm = &self.nodes[*mask].value;
                    let mut dm = vec![S::zero(); tm.len()];
                    for (p, d) in dm.iter_mut().enumerate() {
                        for ch in 0..c {
                            *d += g.data()[p * c + ch] * ti.data()[p * c + ch];
                        }
                    }
                    Self::accumulate(
                        grads,
                        *mask,
                        Tensor::new(tm.shape().to_vec(), dm).expect("dmask"),
                    );
                }
                if self.needs(*image) {
                    let tm = &self.nodes[*mask].value;
                    let mut di = vec![S::zero(); ti.len()];
                    for (p, &mv) in tm.data().iter().enumerate() {
                        for ch in 0..c {
                            di[p * c + ch] = g.data()[p * c + ch] * mv;
                        }
                    }
                    Self::accumulate(
                        grads,
                        *image,
                        Tensor::new(ti.shape().to_vec(), di).expect("dimage"),
                    );
                }
            }
        }
    }
}

fn zip_tensor<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip shape")
}

fn conv2d_forward<S: Scalar>(image: &Tensor<S>, kernel: &Tensor<S>, bias: &Tensor<S>) -> Tensor<S> {
    let (h, w, ci) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let (kh, kw, _, co) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    let (ph, pw) = (kh / 2, kw / 2);
    let img = image.data();
    let ker = kernel.data();
    let mut out = vec![S::zero(); h * w * co];
    for y in 0..h {
        for dy in 0..kh {
            let iy = y + dy;
            if iy < ph || iy - ph >= h {
                continue;
            }
            let iy = iy - ph;
            for x in 0..w {
                let obase = (y * w + x) * co;
                for dx in 0..kw {
                    let ix = x + dx;
                    if ix < pw || ix - pw >= w {
                        continue;
                    }
                    let ix = ix - pw;
                    let ibase = (iy * w + ix) * ci;
                    let kbase = (dy * kw + dx) * ci * co;
                    for c in 0..ci {
                        let iv = img[ibase + c];
                        let krow = &ker[kbase + c * co..kbase + (c + 1) * co];
                        let orow = &mut out[obase..obase + co];
                        for (o, &kv) in orow.iter_mut().zip(krow) {
                            *o += iv * kv;
                        }
                    }
                }
            }
        }
    }
    let bi = bias.data();
    for p in 0..h * w {
        let orow = &mut out[p * co..(p + 1) * co];
        for (o, &bv) in orow.iter_mut().zip(bi) {
            *o += bv;
        }
    }
    Tensor::new(vec![h, w, co], out).expect("conv shape")
}

#[allow(clippy::type_complexity)]
fn conv2d_backward<S: Scalar>(
    image: &Tensor<S>,
    kernel: &Tensor<S>,
    g: &Tensor<S>,
    need_image: bool,
    need_kernel: bool,
    need_bias: bool,
) -> (Option<Tensor<S>>, Option<Tensor<S>>, Option<Tensor<S>>) {
    let (h, w, ci) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let (kh, kw, _, co) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    let (ph, pw) = (kh / 2, kw / 2);
    let img = image.data();
    let ker = kernel.data();
    let gd = g.data();
    let mut d_img = if need_image {
        vec![S::zero(); image.len()]
    } else {
        Vec::new()
    };
    let mut d_ker = if need_kernel {
        vec![S::zero(); kernel.len()]
    } else {
        Vec::new()
    };
    for y in 0..h {
        for dy in 0..kh {
            let iy = y + dy;
            if iy < ph || iy - ph >= h {
                continue;
            }
            let iy = iy - ph;
            for x in 0..w {
                let gbase = (y * w + x) * co;
                for dx in 0..kw {
                    let ix = x + dx;
                    if ix < pw || ix - pw >= w {
                        continue;
                    }
                    let ix = ix - pw;
                    let ibase = (iy * w + ix) * ci;
                    let kbase = (dy * kw + dx) * ci * co;
                    for c in 0..ci {
                        let grow = &gd[gbase..gbase + co];
                        let krow = &ker[kbase + c * co..kbase + (c + 1) * co];
                        if need_image {
                            let acc: S = grow.iter().zip(krow).map(|(&a, &b)| a * b).sum();
                            d_img[ibase + c] += acc;
                        }
                        if need_kernel {
                            let iv = img[ibase + c];
                            let drow = &mut d_ker[kbase + c * co..kbase + (c + 1) * co];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d += gv * iv;
                            }
                        }
                    }
                }
            }
        }
    }
    let d_bias = if need_bias {
        let mut db = vec![S::zero(); co];
        for p in 0..h * w {
            let grow = &gd[p * co..(p + 1) * co];
            for (d, &gv) in db.iter_mut().zip(grow) {
                *d += gv;
            }
        }
        Some(Tensor::new(vec![co], db).expect("db"))
    } else {
        None
    };
    (
        if need_image {
            Some(Tensor::new(image.shape().to_vec(), d_img).expect("dimg"))
        } else {
            None
        },
        if need_kernel {
            Some(Tensor::new(kernel.shape().to_vec(), d_ker).expect("dker"))
        } else {
            None
        },
        d_bias,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_backward_passes_seed() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::filled(&[3], 2.0));
        let seed = Tensor::filled(&[3], 1.0);
        let grads = g.backward(x, &seed).unwrap();
        assert_eq!(grads.node(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn scale_by_two_doubles_seed() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::scalar(5.0));
        let y = g.scale(x, 2.0);
        let grads = g.backward(y, &Tensor::scalar(1.0)).unwrap();
        assert_eq!(grads.node(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn seed_shape_mismatch_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::filled(&[3], 0.0));
        let bad = Tensor::filled(&[2], 1.0);
        assert!(matches!(
            g.backward(x, &bad),
            Err(GraphError::SeedMismatch { .. })
        ));
    }

    #[test]
    fn sigmoid_values_and_gradient_at_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::scalar(0.0));
        let y = g.sigmoid(x);
        assert_eq!(g.value(y).data()[0], 0.5);
        let grads = g.backward(y, &Tensor::scalar(1.0)).unwrap();
        assert_eq!(grads.node(x).unwrap().data()[0], 0.25);

        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::scalar(3.0f64.ln()));
        let y = g.sigmoid(x);
        assert!((g.value(y).data()[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn shared_leaf_accumulates() {
        // y = x + x  =>  dy/dx = 2
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::scalar(1.5));
        let y = g.add(x, x).unwrap();
        let grads = g.backward(y, &Tensor::scalar(1.0)).unwrap();
        assert_eq!(grads.node(x).unwrap().data()[0], 2.0);
    }

    #[test]
    fn matvec_known_gradient() {
        // y = W x, W = [[1,2],[3,4]], x = [5, 6]; seed [1, 1]
        let mut g = Graph::<f64>::new();
        let w = g.input(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let x = g.input(Tensor::new(vec![2], vec![5.0, 6.0]).unwrap());
        let y = g.matvec(w, x).unwrap();
        assert_eq!(g.value(y).data(), &[17.0, 39.0]);
        let grads = g.backward(y, &Tensor::filled(&[2], 1.0)).unwrap();
        assert_eq!(grads.node(x).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(grads.node(w).unwrap().data(), &[5.0, 6.0, 5.0, 6.0]);
    }

    #[test]
    fn max_pool_routes_to_first_winner() {
        let mut g = Graph::<f64>::new();
        // 2x2 single channel, tie between the two 3.0 entries
        let x = g.input(Tensor::new(vec![2, 2, 1], vec![3.0, 3.0, 1.0, 0.0]).unwrap());
        let y = g.max_pool2(x).unwrap();
        assert_eq!(g.value(y).data(), &[3.0]);
        let grads = g.backward(y, &Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(grads.node(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_splits_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::filled(&[2], 1.0));
        let b = g.input(Tensor::filled(&[3], 2.0));
        let y = g.concat(a, b).unwrap();
        let seed = Tensor::new(vec![5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let grads = g.backward(y, &seed).unwrap();
        assert_eq!(grads.node(a).unwrap().data(), &[1.0, 2.0]);
        assert_eq!(grads.node(b).unwrap().data(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn mean_axis_shape_and_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let y = g.mean_axis(x, 1).unwrap();
        assert_eq!(g.value(y).shape(), &[2]);
        assert_eq!(g.value(y).data(), &[2.0, 5.0]);
        let grads = g.backward(y, &Tensor::new(vec![2], vec![3.0, 6.0]).unwrap()).unwrap();
        assert_eq!(
            grads.node(x).unwrap().data(),
            &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]
        );
    }

    #[test]
    fn pixel_mask_gradient_sums_channels() {
        let mut g = Graph::<f64>::new();
        let m = g.input(Tensor::filled(&[1, 1], 1.0));
        let img = g.constant(Tensor::new(vec![1, 1, 3], vec![0.2, 0.3, 0.5]).unwrap());
        let y = g.pixel_mask(m, img).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s, &Tensor::scalar(1.0)).unwrap();
        assert!((grads.node(m).unwrap().data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn elementwise_shape_mismatch_rejected() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::filled(&[2], 0.0));
        let b = g.input(Tensor::filled(&[3], 0.0));
        assert!(matches!(
            g.add(a, b),
            Err(GraphError::ShapeMismatch { .. })
        ));
    }
}
