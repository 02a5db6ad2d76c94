//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every primitive applied to its [`Var`] handles in
//! execution order, which is already a topological order. [`Graph::backward`]
//! walks the record in reverse and accumulates gradients into every leaf that
//! was registered with [`Graph::param`].
//!
//! Graphs are cheap to build and are meant to be thrown away after each batch.

use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fixed linear map applied independently to every row (last axis) of a tensor.
///
/// The backward pass applies the adjoint, so any parameter-free linear layer
/// (wavelet transforms, fixed mixing) can participate in a graph.
pub trait LinearOperator<T>: Send + Sync {
    /// Row width the operator acts on; input and output widths are equal.
    fn dim(&self) -> usize;
    fn apply(&self, x: &[T], out: &mut [T]);
    fn apply_adjoint(&self, y: &[T], out: &mut [T]);
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Exp(Var),
    Atan(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    Square(Var),
    Scale(Var, T),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Reshape(Var),
    Sum { input: Var, axis: Option<usize> },
    Mean { input: Var, axis: Option<usize> },
    Dropout { input: Var, mask: Vec<T> },
    Gather { input: Var, index: Arc<[usize]> },
    Linear { input: Var, map: Arc<dyn LinearOperator<T>>, adjoint: bool },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation. See the module docs.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// How an operand maps into a broadcast output.
enum Bcast {
    Same,
    Scalar,
    /// Operand shape equals the trailing dims of the output.
    Suffix(usize),
    General(Vec<usize>),
}

impl Bcast {
    fn new(out: &[usize], inp: &[usize]) -> Self {
        let n_in: usize = inp.iter().product();
        if out == inp {
            return Bcast::Same;
        }
        if n_in == 1 {
            return Bcast::Scalar;
        }
        let k = inp.len();
        if k <= out.len() && out[out.len() - k..] == *inp {
            return Bcast::Suffix(n_in);
        }
        // general strided mapping
        let nd = out.len();
        let mut strides = vec![0usize; nd];
        let mut acc = 1usize;
        for (i, d) in (0..k).rev().enumerate() {
            let od = nd - 1 - i;
            strides[od] = if inp[d] == 1 { 0 } else { acc };
            acc *= inp[d];
        }
        let n_out: usize = out.iter().product();
        let mut map = Vec::with_capacity(n_out);
        let mut counter = vec![0usize; nd];
        for _ in 0..n_out {
            map.push(counter.iter().zip(&strides).map(|(c, s)| c * s).sum());
            for ax in (0..nd).rev() {
                counter[ax] += 1;
                if counter[ax] < out[ax] {
                    break;
                }
                counter[ax] = 0;
            }
        }
        Bcast::General(map)
    }

    #[inline]
    fn idx(&self, i: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Scalar => 0,
            Bcast::Suffix(n) => i % n,
            Bcast::General(m) => m[i],
        }
    }
}

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0; nd];
    for i in 0..nd {
        let da = if i + a.len() >= nd { a[i + a.len() - nd] } else { 1 };
        let db = if i + b.len() >= nd { b[i + b.len() - nd] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op,
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

/// Splits `shape` around `axis` into (outer, axis length, inner) element counts.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, rg: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        Ok(self.push(value, op, rg))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that does not receive a gradient (data, conditions, frozen weights).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that receives a gradient on [`backward`](Self::backward).
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn scalar(&mut self, v: T) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Gradient of the last backward seed with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let shape = broadcast_shape(name, ta.shape(), tb.shape())?;
        let n: usize = shape.iter().product();
        let (ma, mb) = (Bcast::new(&shape, ta.shape()), Bcast::new(&shape, tb.shape()));
        let (da, db) = (ta.data(), tb.data());
        let data: Vec<T> = match (&ma, &mb) {
            (Bcast::Same, Bcast::Same) => da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect(),
            _ => (0..n).map(|i| f(da[ma.idx(i)], db[mb.idx(i)])).collect(),
        };
        let rg = self.rg(a) || self.rg(b);
        self.push_checked(name, Tensor::from_parts(shape, data), op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Matrix product of 2-D operands.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        let rg = self.rg(a) || self.rg(b);
        self.push_checked("matmul", out, Op::MatMul(a, b), rg)
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var> {
        let out = self.nodes[a.0].value.map(f);
        let rg = self.rg(a);
        self.push_checked(name, out, op, rg)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, T::exp, Op::Exp(a))
    }

    pub fn atan(&mut self, a: Var) -> Result<Var> {
        self.unary("atan", a, T::atan, Op::Atan(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(T::zero()), Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var> {
        self.unary(
            "leaky_relu",
            a,
            move |x| if x > T::zero() { x } else { x * slope },
            Op::LeakyRelu(a, slope),
        )
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, Op::Square(a))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        self.unary("scale", a, move |x| x * c, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -T::one())
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or(TensorError::InvalidArgument {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::InvalidArgument {
                op: "concat",
                msg: format!("axis {axis} out of range for shape {base:?}"),
            });
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&base, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let t = &self.nodes[v.0].value;
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Contiguous sub-range `[start, start + len)` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape_in = self.shape(a).to_vec();
        if axis >= shape_in.len() || len == 0 || start + len > shape_in[axis] {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                msg: format!("range {start}..{} invalid on axis {axis} of {shape_in:?}", start + len),
            });
        }
        let (outer, n_axis, inner) = axis_split(&shape_in, axis);
        let src = self.nodes[a.0].value.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n_axis * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = shape_in;
        shape[axis] = len;
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Slice { input: a, axis, start },
            rg,
        ))
    }

    /// Splits along `axis` into pieces of the given sizes.
    pub fn split(&mut self, a: Var, axis: usize, sizes: &[usize]) -> Result<Vec<Var>> {
        let total: usize = sizes.iter().sum();
        if self.shape(a).get(axis) != Some(&total) {
            return Err(TensorError::InvalidArgument {
                op: "split",
                msg: format!("sizes {sizes:?} do not cover axis {axis} of {:?}", self.shape(a)),
            });
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &s in sizes {
            out.push(self.slice(a, axis, start, s)?);
            start += s;
        }
        Ok(out)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.nodes[a.0].value.reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    fn reduce(&mut self, a: Var, axis: Option<usize>, mean: bool) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        let name = if mean { "mean" } else { "sum" };
        let out = match axis {
            None => {
                let s = t.data().iter().fold(T::zero(), |acc, &v| acc + v);
                let s = if mean { s / T::from_usize(t.len()).unwrap() } else { s };
                Tensor::scalar(s)
            }
            Some(ax) => {
                if ax >= t.ndim() {
                    return Err(TensorError::InvalidArgument {
                        op: name,
                        msg: format!("axis {ax} out of range for shape {:?}", t.shape()),
                    });
                }
                let (outer, n_axis, inner) = axis_split(t.shape(), ax);
                let mut data = vec![T::zero(); outer * inner];
                let src = t.data();
                for o in 0..outer {
                    for j in 0..n_axis {
                        let base = (o * n_axis + j) * inner;
                        for i in 0..inner {
                            data[o * inner + i] = data[o * inner + i] + src[base + i];
                        }
                    }
                }
                if mean {
                    let d = T::from_usize(n_axis).unwrap();
                    data.iter_mut().for_each(|v| *v = *v / d);
                }
                let mut shape = t.shape().to_vec();
                shape.remove(ax);
                Tensor::from_parts(shape, data)
            }
        };
        let rg = self.rg(a);
        let op = if mean {
            Op::Mean { input: a, axis }
        } else {
            Op::Sum { input: a, axis }
        };
        self.push_checked(name, out, op, rg)
    }

    /// Sum over all elements (`axis = None`) or along one axis.
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(a, axis, false)
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(a, axis, true)
    }

    /// Inverted dropout: kept activations are divided by `1 - p`.
    /// Identity when `p == 0` or outside training mode.
    pub fn dropout(&mut self, a: Var, p: T, train: bool, rng: &mut RngStream) -> Result<Var> {
        if p < T::zero() || p >= T::one() {
            return Err(TensorError::InvalidArgument {
                op: "dropout",
                msg: format!("probability {p} outside [0, 1)"),
            });
        }
        if !train || p == T::zero() {
            return Ok(a);
        }
        let keep = T::one() - p;
        let inv = T::one() / keep;
        let p64 = p.to_f64().unwrap();
        let mask: Vec<T> = (0..self.nodes[a.0].value.len())
            .map(|_| if rng.uniform() < p64 { T::zero() } else { inv })
            .collect();
        let t = &self.nodes[a.0].value;
        let out = Tensor::from_parts(
            t.shape().to_vec(),
            t.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect(),
        );
        let rg = self.rg(a);
        Ok(self.push(out, Op::Dropout { input: a, mask }, rg))
    }

    /// Gathers positions of the last axis: `out[.., j] = a[.., index[j]]`.
    pub fn gather_last(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        let w = *t.shape().last().unwrap_or(&1);
        if index.iter().any(|&i| i >= w) {
            return Err(TensorError::InvalidArgument {
                op: "gather",
                msg: format!("index out of range for last axis of width {w}"),
            });
        }
        let rows = t.len() / w;
        let mut data = Vec::with_capacity(rows * index.len());
        for r in 0..rows {
            let row = &t.data()[r * w..(r + 1) * w];
            data.extend(index.iter().map(|&i| row[i]));
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = index.len();
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Gather { input: a, index }, rg))
    }

    /// Applies a fixed linear operator (or its adjoint) to every row.
    pub fn linear_map(
        &mut self,
        a: Var,
        map: Arc<dyn LinearOperator<T>>,
        adjoint: bool,
    ) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        let w = map.dim();
        if t.shape().last() != Some(&w) {
            return Err(TensorError::ShapeMismatch {
                op: "linear_map",
                lhs: t.shape().to_vec(),
                rhs: vec![w],
            });
        }
        let mut data = vec![T::zero(); t.len()];
        for (src, dst) in t.data().chunks(w).zip(data.chunks_mut(w)) {
            if adjoint {
                map.apply_adjoint(src, dst);
            } else {
                map.apply(src, dst);
            }
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        self.push_checked(
            "linear_map",
            Tensor::from_parts(shape, data),
            Op::Linear {
                input: a,
                map,
                adjoint,
            },
            rg,
        )
    }

    /// Populates gradients of `loss` with respect to every [`param`](Self::param) leaf.
    ///
    /// Gradients from fan-out accumulate additively. Intermediate gradients are
    /// discarded once propagated; only leaf gradients remain queryable.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let seed_shape = self.shape(loss).to_vec();
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TensorError::NonScalarSeed(seed_shape));
        }
        let n = self.nodes.len();
        self.grads = (0..n).map(|_| None).collect();
        if !self.rg(loss) {
            return Ok(());
        }
        self.grads[loss.0] = Some(Tensor::full(&seed_shape, T::one()));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g);
        }
        for (node, grad) in self.nodes.iter().zip(&self.grads) {
            if let Some(grad) = grad {
                debug_assert!(matches!(node.op, Op::Leaf));
                if !grad.all_finite() {
                    return Err(TensorError::NonFinite { op: "backward" });
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a = *a + *b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    /// Sums a broadcast gradient back down to an operand's shape.
    fn unbroadcast(&self, v: Var, g: &Tensor<T>, scale: impl Fn(usize, T) -> T) -> Tensor<T> {
        let shape = self.shape(v).to_vec();
        let map = Bcast::new(g.shape(), &shape);
        let mut out = Tensor::zeros(&shape);
        let od = out.data_mut();
        for (i, &gi) in g.data().iter().enumerate() {
            let j = map.idx(i);
            od[j] = od[j] + scale(i, gi);
        }
        out
    }

    fn propagate(&mut self, idx: usize, g: &Tensor<T>) {
        // Borrow of the op is released before accumulation by cloning the small handle data.
        let node = &self.nodes[idx];
        let mut updates: Vec<(Var, Tensor<T>)> = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                updates.push((a, self.unbroadcast(a, g, |_, x| x)));
                updates.push((b, self.unbroadcast(b, g, |_, x| x)));
            }
            &Op::Sub(a, b) => {
                updates.push((a, self.unbroadcast(a, g, |_, x| x)));
                updates.push((b, self.unbroadcast(b, g, |_, x| -x)));
            }
            &Op::Mul(a, b) => {
                let out_shape = g.shape();
                let (ta, tb) = (self.value(a), self.value(b));
                let (ma, mb) = (Bcast::new(out_shape, ta.shape()), Bcast::new(out_shape, tb.shape()));
                let (da, db) = (ta.data(), tb.data());
                if self.rg(a) {
                    updates.push((a, self.unbroadcast(a, g, |i, x| x * db[mb.idx(i)])));
                }
                if self.rg(b) {
                    updates.push((b, self.unbroadcast(b, g, |i, x| x * da[ma.idx(i)])));
                }
            }
            &Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.rg(a) {
                    let mut ga = vec![T::zero(); m * k];
                    T::gemm(m, n, k, T::one(), g.data(), (n as isize, 1), tb.data(), (1, n as isize), T::zero(), &mut ga);
                    updates.push((a, Tensor::from_parts(vec![m, k], ga)));
                }
                if self.rg(b) {
                    let mut gb = vec![T::zero(); k * n];
                    T::gemm(k, m, n, T::one(), ta.data(), (1, k as isize), g.data(), (n as isize, 1), T::zero(), &mut gb);
                    updates.push((b, Tensor::from_parts(vec![k, n], gb)));
                }
            }
            &Op::Exp(a) => {
                let y = &node.value;
                updates.push((a, zip_map(g, y, |gi, yi| gi * yi)));
            }
            &Op::Atan(a) => {
                let x = self.value(a);
                updates.push((a, zip_map(g, x, |gi, xi| gi / (T::one() + xi * xi))));
            }
            &Op::Relu(a) => {
                let x = self.value(a);
                updates.push((a, zip_map(g, x, |gi, xi| if xi > T::zero() { gi } else { T::zero() })));
            }
            &Op::LeakyRelu(a, slope) => {
                let x = self.value(a);
                updates.push((a, zip_map(g, x, |gi, xi| if xi > T::zero() { gi } else { gi * slope })));
            }
            &Op::Square(a) => {
                let x = self.value(a);
                let two = T::one() + T::one();
                updates.push((a, zip_map(g, x, |gi, xi| two * gi * xi)));
            }
            &Op::Scale(a, c) => {
                updates.push((a, g.map(|gi| gi * c)));
            }
            Op::Concat { inputs, axis } => {
                let axis = *axis;
                let (outer, total, inner) = axis_split(g.shape(), axis);
                let mut offset = 0;
                for &v in inputs {
                    let s = self.shape(v).to_vec();
                    let len = s[axis];
                    if self.rg(v) {
                        let mut data = Vec::with_capacity(s.iter().product());
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            data.extend_from_slice(&g.data()[base..base + len * inner]);
                        }
                        updates.push((v, Tensor::from_parts(s, data)));
                    }
                    offset += len;
                }
            }
            &Op::Slice { input, axis, start } => {
                let s = self.shape(input).to_vec();
                let (outer, n_axis, inner) = axis_split(&s, axis);
                let len = g.shape()[axis];
                let mut out = Tensor::zeros(&s);
                let od = out.data_mut();
                for o in 0..outer {
                    let dst = o * n_axis * inner + start * inner;
                    let src = o * len * inner;
                    od[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
                }
                updates.push((input, out));
            }
            &Op::Reshape(a) => {
                let s = self.shape(a).to_vec();
                updates.push((a, Tensor::from_parts(s, g.data().to_vec())));
            }
            &Op::Sum { input, axis } | &Op::Mean { input, axis } => {
                let is_mean = matches!(node.op, Op::Mean { .. });
                let s = self.shape(input).to_vec();
                let out = match axis {
                    None => {
                        let mut v = g.item();
                        if is_mean {
                            v = v / T::from_usize(s.iter().product()).unwrap();
                        }
                        Tensor::full(&s, v)
                    }
                    Some(ax) => {
                        let (outer, n_axis, inner) = axis_split(&s, ax);
                        let div = if is_mean { T::from_usize(n_axis).unwrap() } else { T::one() };
                        let mut data = Vec::with_capacity(outer * n_axis * inner);
                        for o in 0..outer {
                            for _ in 0..n_axis {
                                data.extend(g.data()[o * inner..(o + 1) * inner].iter().map(|&x| x / div));
                            }
                        }
                        Tensor::from_parts(s, data)
                    }
                };
                updates.push((input, out));
            }
            Op::Dropout { input, mask } => {
                let data = g.data().iter().zip(mask).map(|(&x, &m)| x * m).collect();
                updates.push((*input, Tensor::from_parts(g.shape().to_vec(), data)));
            }
            Op::Gather { input, index } => {
                let s = self.shape(*input).to_vec();
                let w = *s.last().unwrap();
                let mut out = Tensor::zeros(&s);
                let od = out.data_mut();
                let k = index.len();
                for (r, grow) in g.data().chunks(k).enumerate() {
                    for (j, &i) in index.iter().enumerate() {
                        od[r * w + i] = od[r * w + i] + grow[j];
                    }
                }
                updates.push((*input, out));
            }
            Op::Linear { input, map, adjoint } => {
                let w = map.dim();
                let mut data = vec![T::zero(); g.len()];
                for (src, dst) in g.data().chunks(w).zip(data.chunks_mut(w)) {
                    if *adjoint {
                        map.apply(src, dst);
                    } else {
                        map.apply_adjoint(src, dst);
                    }
                }
                updates.push((*input, Tensor::from_parts(g.shape().to_vec(), data)));
            }
        }
        for (v, t) in updates {
            self.accumulate(v, t);
        }
    }
}

fn zip_map<T: Scalar>(g: &Tensor<T>, x: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::from_parts(
        g.shape().to_vec(),
        g.data().iter().zip(x.data()).map(|(&a, &b)| f(a, b)).collect(),
    )
}
