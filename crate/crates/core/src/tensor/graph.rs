//! Reverse-mode differentiation over a linear tape of primitive operations.
//!
//! Nodes are appended in evaluation order, so the tape is already
//! topologically sorted; `backward` walks it once from the end.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::array::{broadcast_index, check_broadcast, gemm, gemm_nt, gemm_tn, numel, permute_data, strides};
use super::{Gradients, ParamId, ParamStore, Tensor, TensorError};

/// Variance floor used by [`Graph::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul { a: Var, b: Var, transpose_b: bool },
    Permute(Var, Vec<usize>),
    Reshape(Var),
    Softmax(Var),
    LayerNorm { input: Var, rstd: Vec<f64> },
    Gelu(Var),
    Silu(Var),
    Mean { input: Var, axis: usize },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Sum(Var),
    Mse(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct NodeGrads {
    grads: Vec<Option<Vec<f64>>>,
    params: Gradients,
}

impl NodeGrads {
    /// Gradient with respect to any node; zero-filled when nothing flowed into it.
    pub fn wrt(&self, graph: &Graph, v: Var) -> Vec<f64> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => vec![0.0; graph.value(v).len()],
        }
    }

    pub fn params(&self) -> &Gradients {
        &self.params
    }

    pub fn into_params(self) -> Gradients {
        self.params
    }
}

/// Tape of tensor operations supporting one backward pass per forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: BTreeMap<ParamId, Var>,
    param_count: usize,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

fn erf(x: f64) -> f64 {
    libm::erf(x)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

const INV_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Leaf that never receives a gradient of interest.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to a parameter. Repeated calls for the same id return the
    /// same node so that every use accumulates into one gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf);
        self.param_nodes.insert(id, v);
        self.param_count = self.param_count.max(store.len());
        v
    }

    fn binary_broadcast(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        check_broadcast(op, sa, sb)?;
        let idx = broadcast_index(sa, sb);
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let data = av.iter().zip(&idx).map(|(&x, &j)| f(x, bv[j])).collect();
        Ok(Tensor::from_parts(sa.to_vec(), data))
    }

    /// `a + b`, where `b` broadcasts into the shape of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.binary_broadcast("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.binary_broadcast("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.binary_broadcast("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|x| x * s).collect();
        let t = Tensor::from_parts(src.shape().to_vec(), data);
        self.push(t, Op::Scale(a, s))
    }

    /// Batched matrix product over the last two axes.
    ///
    /// `b` is either 2-D (shared across all leading dims of `a`) or has the same
    /// leading dims as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.matmul_impl(a, b, false)
    }

    /// Batched `a · bᵀ` over the last two axes.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var, TensorError> {
        let op = if transpose_b { "matmul_nt" } else { "matmul" };
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch(op, &sa, &sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = if transpose_b {
            (sb[sb.len() - 1], sb[sb.len() - 2])
        } else {
            (sb[sb.len() - 2], sb[sb.len() - 1])
        };
        let lead_a = &sa[..sa.len() - 2];
        let lead_b = &sb[..sb.len() - 2];
        if kb != k || !(lead_b.is_empty() || lead_b == lead_a) {
            return Err(mismatch(op, &sa, &sb));
        }
        let batch = numel(lead_a);
        let shared = lead_b.is_empty();
        let mut out = vec![0.0; batch * m * n];
        let av = self.value(a).data();
        let bv = self.value(b).data();
        for i in 0..batch {
            let ab = &av[i * m * k..(i + 1) * m * k];
            let bb = if shared { bv } else { &bv[i * k * n..(i + 1) * k * n] };
            let cb = &mut out[i * m * n..(i + 1) * m * n];
            if transpose_b {
                gemm_nt(ab, bb, cb, m, k, n);
            } else {
                gemm(ab, bb, cb, m, k, n);
            }
        }
        let mut shape = lead_a.to_vec();
        shape.extend_from_slice(&[m, n]);
        let t = Tensor::from_parts(shape, out);
        Ok(self.push(t, Op::MatMul { a, b, transpose_b }))
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        if axes.len() != rank {
            return Err(TensorError::InvalidShape {
                op: "permute",
                shape,
                reason: "axis list length differs from rank",
            });
        }
        for &ax in axes {
            if ax >= rank || seen[ax] {
                return Err(TensorError::InvalidAxis {
                    op: "permute",
                    axis: ax,
                    rank,
                });
            }
            seen[ax] = true;
        }
        let (s, d) = permute_data(self.value(a).data(), &shape, axes);
        Ok(self.push(Tensor::from_parts(s, d), Op::Permute(a, axes.to_vec())))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let rank = self.shape(a).len();
        if rank < 2 {
            return Err(TensorError::InvalidAxis {
                op: "transpose",
                axis: 1,
                rank,
            });
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(rank - 2, rank - 1);
        self.permute(a, &axes)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let src = self.value(a);
        if numel(shape) != src.len() {
            return Err(mismatch("reshape", src.shape(), shape));
        }
        let t = Tensor::from_parts(shape.to_vec(), src.data().to_vec());
        Ok(self.push(t, Op::Reshape(a)))
    }

    fn last_axis(&self, op: &'static str, a: Var) -> Result<(usize, usize), TensorError> {
        let shape = self.shape(a);
        let width = shape.last().copied().unwrap_or(0);
        if shape.is_empty() || width == 0 {
            return Err(TensorError::EmptyAxis {
                op,
                shape: shape.to_vec(),
            });
        }
        Ok((numel(shape) / width, width))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let (rows, w) = self.last_axis("softmax", a)?;
        let src = self.value(a);
        let mut out = vec![0.0; rows * w];
        for r in 0..rows {
            let x = &src.data()[r * w..(r + 1) * w];
            let mx = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let y = &mut out[r * w..(r + 1) * w];
            let mut z = 0.0;
            for (yi, &xi) in y.iter_mut().zip(x) {
                *yi = libm::exp(xi - mx);
                z += *yi;
            }
            for yi in y.iter_mut() {
                *yi /= z;
            }
        }
        let t = Tensor::from_parts(src.shape().to_vec(), out);
        Ok(self.push(t, Op::Softmax(a)))
    }

    /// Layer normalization over the last axis, without learned affine.
    pub fn layer_norm(&mut self, a: Var) -> Result<Var, TensorError> {
        let (rows, w) = self.last_axis("layer_norm", a)?;
        let src = self.value(a);
        let mut out = vec![0.0; rows * w];
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let x = &src.data()[r * w..(r + 1) * w];
            let mean = x.iter().sum::<f64>() / w as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
            let rs = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            for (o, &xi) in out[r * w..(r + 1) * w].iter_mut().zip(x) {
                *o = (xi - mean) * rs;
            }
            rstd.push(rs);
        }
        let t = Tensor::from_parts(src.shape().to_vec(), out);
        Ok(self.push(t, Op::LayerNorm { input: a, rstd }))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let data = src
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + erf(x * INV_SQRT_2)))
            .collect();
        let t = Tensor::from_parts(src.shape().to_vec(), data);
        self.push(t, Op::Gelu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|&x| x * sigmoid(x)).collect();
        let t = Tensor::from_parts(src.shape().to_vec(), data);
        self.push(t, Op::Silu(a))
    }

    /// Mean over `axis`, which is removed from the output shape.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis {
                op: "mean_axis",
                axis,
                rank: shape.len(),
            });
        }
        let n = shape[axis];
        if n == 0 {
            return Err(TensorError::EmptyAxis { op: "mean_axis", shape });
        }
        let outer = numel(&shape[..axis]);
        let inner = numel(&shape[axis + 1..]);
        let src = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let base = (o * n + j) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        Ok(self.push(Tensor::from_parts(out_shape, out), Op::Mean { input: a, axis }))
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = match inputs.first() {
            Some(&v) => self.shape(v).to_vec(),
            None => {
                return Err(TensorError::InvalidShape {
                    op: "concat",
                    shape: Vec::new(),
                    reason: "no inputs",
                })
            }
        };
        if axis >= first.len() {
            return Err(TensorError::InvalidAxis {
                op: "concat",
                axis,
                rank: first.len(),
            });
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let same_rest =
                s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !same_rest {
                return Err(mismatch("concat", &first, s));
            }
            total += s[axis];
        }
        let outer = numel(&first[..axis]);
        let inner = numel(&first[axis + 1..]);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let ext = self.shape(v)[axis];
                let d = self.value(v).data();
                out.extend_from_slice(&d[o * ext * inner..(o + 1) * ext * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let t = Tensor::from_parts(shape, out);
        Ok(self.push(
            t,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    /// Sub-range `[start, end)` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis {
                op: "slice",
                axis,
                rank: shape.len(),
            });
        }
        if start > end || end > shape[axis] {
            return Err(TensorError::InvalidShape {
                op: "slice",
                shape,
                reason: "slice bounds out of range",
            });
        }
        let outer = numel(&shape[..axis]);
        let inner = numel(&shape[axis + 1..]);
        let ext = shape[axis];
        let len = end - start;
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&src[(o * ext + start) * inner..(o * ext + end) * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        Ok(self.push(Tensor::from_parts(out_shape, out), Op::Slice { input: a, axis, start }))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean squared difference between two equally shaped tensors, as a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch("mse", sa, sb));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let n = av.len().max(1) as f64;
        let s = av.iter().zip(bv).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
        Ok(self.push(Tensor::scalar(s), Op::Mse(a, b)))
    }

    /// Gradients of a scalar node with respect to every node on the tape.
    pub fn backward(&self, loss: Var) -> Result<NodeGrads, TensorError> {
        let ls = self.shape(loss);
        if numel(ls) != 1 {
            return Err(TensorError::NonScalarLoss { shape: ls.to_vec() });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut params = vec![None; self.param_count];
        for (&id, &v) in &self.param_nodes {
            params[id.0] = grads[v.0].clone();
        }
        Ok(NodeGrads {
            grads,
            params: Gradients::new(params),
        })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                accumulate(grads, *a, self.value(*a).len(), |buf| add_into(buf, g));
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let idx = broadcast_index(self.shape(*a), self.shape(*b));
                accumulate(grads, *b, self.value(*b).len(), |buf| {
                    for (gi, &j) in g.iter().zip(&idx) {
                        buf[j] += sign * gi;
                    }
                });
            }
            Op::Mul(a, b) => {
                let idx = broadcast_index(self.shape(*a), self.shape(*b));
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                accumulate(grads, *a, av.len(), |buf| {
                    for ((o, gi), &j) in buf.iter_mut().zip(g).zip(&idx) {
                        *o += gi * bv[j];
                    }
                });
                accumulate(grads, *b, bv.len(), |buf| {
                    for ((gi, &x), &j) in g.iter().zip(av).zip(&idx) {
                        buf[j] += gi * x;
                    }
                });
            }
            Op::Scale(a, s) => {
                accumulate(grads, *a, g.len(), |buf| {
                    buf.iter_mut().zip(g).for_each(|(o, gi)| *o += s * gi)
                });
            }
            Op::MatMul { a, b, transpose_b } => {
                let sa = self.shape(*a);
                let sb = self.shape(*b);
                let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                let n = node.value.shape()[node.value.rank() - 1];
                let batch = numel(&sa[..sa.len() - 2]);
                let shared = sb.len() == 2;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let bsize = k * n;
                accumulate(grads, *a, av.len(), |buf| {
                    for i in 0..batch {
                        let gb = &g[i * m * n..(i + 1) * m * n];
                        let bb = if shared { bv } else { &bv[i * bsize..(i + 1) * bsize] };
                        let out = &mut buf[i * m * k..(i + 1) * m * k];
                        if *transpose_b {
                            // b is [n,k]
                            gemm(gb, bb, out, m, n, k);
                        } else {
                            // b is [k,n]
                            gemm_nt(gb, bb, out, m, n, k);
                        }
                    }
                });
                accumulate(grads, *b, bv.len(), |buf| {
                    for i in 0..batch {
                        let gb = &g[i * m * n..(i + 1) * m * n];
                        let ab = &av[i * m * k..(i + 1) * m * k];
                        let out = if shared {
                            &mut buf[..]
                        } else {
                            &mut buf[i * bsize..(i + 1) * bsize]
                        };
                        if *transpose_b {
                            gemm_tn(gb, ab, out, m, n, k);
                        } else {
                            gemm_tn(ab, gb, out, m, k, n);
                        }
                    }
                });
            }
            Op::Permute(a, axes) => {
                let mut inv = vec![0; axes.len()];
                for (pos, &ax) in axes.iter().enumerate() {
                    inv[ax] = pos;
                }
                let (_, back) = permute_data(g, node.value.shape(), &inv);
                accumulate(grads, *a, back.len(), |buf| add_into(buf, &back));
            }
            Op::Reshape(a) => {
                accumulate(grads, *a, g.len(), |buf| add_into(buf, g));
            }
            Op::Softmax(a) => {
                let w = *node.value.shape().last().unwrap();
                let y = node.value.data();
                accumulate(grads, *a, g.len(), |buf| {
                    for r in 0..g.len() / w {
                        let (ys, gs) = (&y[r * w..(r + 1) * w], &g[r * w..(r + 1) * w]);
                        let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                        for ((o, &yi), &gi) in buf[r * w..(r + 1) * w].iter_mut().zip(ys).zip(gs) {
                            *o += yi * (gi - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { input, rstd } => {
                let w = *node.value.shape().last().unwrap();
                let xhat = node.value.data();
                accumulate(grads, *input, g.len(), |buf| {
                    for (r, &rs) in rstd.iter().enumerate() {
                        let (xs, gs) = (&xhat[r * w..(r + 1) * w], &g[r * w..(r + 1) * w]);
                        let mg = gs.iter().sum::<f64>() / w as f64;
                        let mgx = gs.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>() / w as f64;
                        for ((o, &xi), &gi) in buf[r * w..(r + 1) * w].iter_mut().zip(xs).zip(gs) {
                            *o += rs * (gi - mg - xi * mgx);
                        }
                    }
                });
            }
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                accumulate(grads, *a, g.len(), |buf| {
                    for ((o, &xi), &gi) in buf.iter_mut().zip(x).zip(g) {
                        let cdf = 0.5 * (1.0 + erf(xi * INV_SQRT_2));
                        let pdf = INV_SQRT_2PI * libm::exp(-0.5 * xi * xi);
                        *o += gi * (cdf + xi * pdf);
                    }
                });
            }
            Op::Silu(a) => {
                let x = self.value(*a).data();
                accumulate(grads, *a, g.len(), |buf| {
                    for ((o, &xi), &gi) in buf.iter_mut().zip(x).zip(g) {
                        let s = sigmoid(xi);
                        *o += gi * s * (1.0 + xi * (1.0 - s));
                    }
                });
            }
            Op::Mean { input, axis } => {
                let shape = self.shape(*input);
                let n = shape[*axis];
                let outer = numel(&shape[..*axis]);
                let inner = numel(&shape[*axis + 1..]);
                let inv = 1.0 / n as f64;
                accumulate(grads, *input, numel(shape), |buf| {
                    for o in 0..outer {
                        for j in 0..n {
                            let base = (o * n + j) * inner;
                            for i in 0..inner {
                                buf[base + i] += g[o * inner + i] * inv;
                            }
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let outer = numel(&shape[..*axis]);
                let inner = numel(&shape[*axis + 1..]);
                let total = shape[*axis];
                let mut offset = 0;
                for &v in inputs {
                    let ext = self.shape(v)[*axis];
                    accumulate(grads, v, outer * ext * inner, |buf| {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + ext) * inner];
                            add_into(&mut buf[o * ext * inner..(o + 1) * ext * inner], src);
                        }
                    });
                    offset += ext;
                }
            }
            Op::Slice { input, axis, start } => {
                let shape = self.shape(*input);
                let outer = numel(&shape[..*axis]);
                let inner = numel(&shape[*axis + 1..]);
                let ext = shape[*axis];
                let len = node.value.shape()[*axis];
                accumulate(grads, *input, numel(shape), |buf| {
                    for o in 0..outer {
                        let dst = &mut buf[(o * ext + start) * inner..(o * ext + start + len) * inner];
                        add_into(dst, &g[o * len * inner..(o + 1) * len * inner]);
                    }
                });
            }
            Op::Sum(a) => {
                let g0 = g[0];
                accumulate(grads, *a, self.value(*a).len(), |buf| {
                    buf.iter_mut().for_each(|o| *o += g0)
                });
            }
            Op::Mse(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let c = 2.0 * g[0] / av.len().max(1) as f64;
                accumulate(grads, *a, av.len(), |buf| {
                    for ((o, x), y) in buf.iter_mut().zip(av).zip(bv) {
                        *o += c * (x - y);
                    }
                });
                accumulate(grads, *b, bv.len(), |buf| {
                    for ((o, x), y) in buf.iter_mut().zip(av).zip(bv) {
                        *o -= c * (x - y);
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl FnOnce(&mut [f64])) {
    let buf = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
    f(buf);
}

/// Row-major strides of a shape; exposed for callers that index raw tensor data.
pub fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    strides(shape)
}
