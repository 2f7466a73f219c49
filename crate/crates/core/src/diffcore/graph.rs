use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::tensor::gemm;
use super::{ParamId, ParamStore, Tensor};
use crate::{Error, Result};

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

/// Backward rule for an operation defined outside this module.
///
/// `backward` receives the upstream gradient and the forward input values and
/// returns one optional gradient per input, in order.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor]) -> Result<Vec<Option<Tensor>>>;
}

enum Op {
    Constant,
    Input,
    Param(ParamId),
    MatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Concat { inputs: Vec<Var>, axis: usize },
    Relu(Var),
    MaxReduce { input: Var, axis: usize, argmax: Vec<usize> },
    Softmax { input: Var, axis: usize },
    Scale(Var, f64),
    GatherRows { input: Var, indices: Vec<usize> },
    Reshape(Var),
    Transpose(Var),
    SliceCols { input: Var, start: usize },
    Sum(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, normalized: Vec<f64>, inv_std: Vec<f64> },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    tracked: bool,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    params: BTreeMap<ParamId, Tensor>,
    inputs: BTreeMap<Var, Tensor>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn input(&self, var: Var) -> Option<&Tensor> {
        self.inputs.get(&var)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty() && self.inputs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.params.len() + self.inputs.len()
    }

    /// Adds another set of parameter gradients into this one.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (id, g) in &other.params {
            match self.params.get_mut(id) {
                Some(mine) => mine.add_assign(g),
                None => {
                    self.params.insert(*id, g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.params.values_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(Tensor::is_finite)
    }
}

/// Single-use tape of tensor operations.
///
/// Nodes are appended in execution order, so the tape is already a
/// topological order; [`Graph::backward`] consumes it.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            tracked,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Constant, false, "constant")
    }

    /// A leaf whose gradient is reported by [`Gradients::input`] when
    /// `requires_grad` is set.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        self.push(value, Op::Input, requires_grad, "input")
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let tracked = !self.params.is_frozen(id);
        self.nodes.push(Node {
            value: self.params.shared(id),
            op: Op::Param(id),
            tracked,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape_err = || Error::Shape {
            op: "matmul",
            lhs: ta.shape().to_vec(),
            rhs: tb.shape().to_vec(),
        };
        let (m, k) = ta.dims2().map_err(|_| shape_err())?;
        let (br, bc) = tb.dims2().map_err(|_| shape_err())?;
        let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(shape_err());
        }
        let mut out = vec![0.0; m * n];
        gemm(ta.data(), m, k, false, tb.data(), br, bc, trans_b, &mut out, false);
        let value = Tensor::new(vec![m, n], out)?;
        let tracked = self.tracked(&[a, b]);
        self.push(value, Op::MatMul { a, b, trans_b }, tracked, "matmul")
    }

    /// Elementwise sum. `b` may also be a trailing-suffix broadcast of `a`
    /// (e.g. a bias row `[C]` added to every row of `[M, C]`).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let sa = ta.shape();
        let sb = tb.shape();
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::Shape {
                op: "add",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let nb = tb.numel();
        let bd = tb.data();
        let data: Vec<f64> = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bd[i % nb])
            .collect();
        let value = Tensor::new(sa.to_vec(), data)?;
        let tracked = self.tracked(&[a, b]);
        self.push(value, Op::Add { a, b }, tracked, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape {
                op: "mul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let tracked = self.tracked(&[a, b]);
        self.push(value, Op::Mul { a, b }, tracked, "mul")
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::invalid(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let conforms = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !conforms {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let len = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(shape, data)?;
        let tracked = self.tracked(inputs);
        self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            tracked,
            "concat",
        )
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(0.0));
        let tracked = self.tracked(&[a]);
        self.push(value, Op::Relu(a), tracked, "relu")
    }

    /// Maximum along `axis`; the axis is removed from the shape. Ties resolve
    /// to the first occurrence.
    pub fn max_reduce(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        if axis >= t.rank() {
            return Err(Error::invalid(format!(
                "max_reduce axis {axis} out of range for {:?}",
                t.shape()
            )));
        }
        let (outer, len, inner) = split_axis(t.shape(), axis);
        let d = t.data();
        let mut out = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut best = 0;
                for j in 1..len {
                    if d[base + j * inner] > d[base + best * inner] {
                        best = j;
                    }
                }
                out.push(d[base + best * inner]);
                argmax.push(best);
            }
        }
        let mut shape: Vec<usize> = t.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let value = Tensor::new(shape, out)?;
        let tracked = self.tracked(&[a]);
        self.push(
            value,
            Op::MaxReduce {
                input: a,
                axis,
                argmax,
            },
            tracked,
            "max_reduce",
        )
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        if axis >= t.rank() {
            return Err(Error::invalid(format!(
                "softmax axis {axis} out of range for {:?}",
                t.shape()
            )));
        }
        let (outer, len, inner) = split_axis(t.shape(), axis);
        let d = t.data();
        let mut out = vec![0.0; d.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mx = (0..len)
                    .map(|j| d[base + j * inner])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..len {
                    let e = (d[base + j * inner] - mx).exp();
                    out[base + j * inner] = e;
                    z += e;
                }
                for j in 0..len {
                    out[base + j * inner] /= z;
                }
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let tracked = self.tracked(&[a]);
        self.push(value, Op::Softmax { input: a, axis }, tracked, "softmax")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x * factor);
        let tracked = self.tracked(&[a]);
        self.push(value, Op::Scale(a, factor), tracked, "scale")
    }

    /// Selects rows (first-axis slices) by index; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let rows = t.shape()[0];
        let width = t.numel() / rows;
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= rows {
                return Err(Error::invalid(format!(
                    "gather_rows index {i} out of range for {rows} rows"
                )));
            }
            data.extend_from_slice(&t.data()[i * width..(i + 1) * width]);
        }
        let mut shape = t.shape().to_vec();
        shape[0] = indices.len();
        let value = Tensor::new(shape, data)?;
        let tracked = self.tracked(&[a]);
        self.push(
            value,
            Op::GatherRows {
                input: a,
                indices: indices.to_vec(),
            },
            tracked,
            "gather_rows",
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        let tracked = self.tracked(&[a]);
        self.push(value, Op::Reshape(a), tracked, "reshape")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2()?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], data)?;
        let tracked = self.tracked(&[a]);
        self.push(value, Op::Transpose(a), tracked, "transpose")
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2()?;
        if len == 0 || start + len > c {
            return Err(Error::invalid(format!(
                "slice_cols {start}..{} out of range for {c} columns",
                start + len
            )));
        }
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&t.data()[i * c + start..i * c + start + len]);
        }
        let value = Tensor::new(vec![r, len], data)?;
        let tracked = self.tracked(&[a]);
        self.push(value, Op::SliceCols { input: a, start }, tracked, "slice_cols")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let tracked = self.tracked(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), tracked, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        const EPS: f64 = 1e-5;
        let t = self.value(x);
        let width = *t.shape().last().unwrap();
        for p in [gamma, beta] {
            if self.shape(p) != [width] {
                return Err(Error::Shape {
                    op: "layer_norm",
                    lhs: t.shape().to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let rows = t.numel() / width;
        let mut normalized = vec![0.0; t.numel()];
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = vec![0.0; t.numel()];
        for r in 0..rows {
            let row = &t.data()[r * width..(r + 1) * width];
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std.push(is);
            for j in 0..width {
                let xh = (row[j] - mean) * is;
                normalized[r * width + j] = xh;
                out[r * width + j] = xh * g[j] + b[j];
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let tracked = self.tracked(&[x, gamma, beta]);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            tracked,
            "layer_norm",
        )
    }

    /// Records an externally computed value with a custom backward rule.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, op: Box<dyn CustomOp>) -> Result<Var> {
        let name = op.name();
        let tracked = self.tracked(inputs);
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            tracked,
            name,
        )
    }

    /// Reverse-mode sweep from a scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out = Gradients::default();
        if !root.tracked {
            return Ok(out);
        }
        grads[loss.0] = Some(Tensor::new(root.value.shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let nodes = &self.nodes;
            let mut send = |v: Var, t: Tensor| {
                if !nodes[v.0].tracked {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Input => {
                    out.inputs.insert(Var(idx), g);
                }
                Op::Param(id) => {
                    out.params.insert(*id, g);
                }
                Op::MatMul { a, b, trans_b } => {
                    let ta = &nodes[a.0].value;
                    let tb = &nodes[b.0].value;
                    let (m, k) = ta.dims2()?;
                    let (br, bc) = tb.dims2()?;
                    let n = if *trans_b { br } else { bc };
                    if nodes[a.0].tracked {
                        // dA = dC · op(B)ᵀ
                        let mut da = vec![0.0; m * k];
                        gemm(g.data(), m, n, false, tb.data(), br, bc, !*trans_b, &mut da, false);
                        send(*a, Tensor::new(vec![m, k], da)?);
                    }
                    if nodes[b.0].tracked {
                        let mut db = vec![0.0; br * bc];
                        if *trans_b {
                            // dB = dCᵀ · A
                            gemm(g.data(), m, n, true, ta.data(), m, k, false, &mut db, false);
                        } else {
                            // dB = Aᵀ · dC
                            gemm(ta.data(), m, k, true, g.data(), m, n, false, &mut db, false);
                        }
                        send(*b, Tensor::new(vec![br, bc], db)?);
                    }
                }
                Op::Add { a, b } => {
                    let nb = nodes[b.0].value.numel();
                    if nodes[b.0].tracked {
                        let mut gb = vec![0.0; nb];
                        for (i, v) in g.data().iter().enumerate() {
                            gb[i % nb] += v;
                        }
                        send(*b, Tensor::new(nodes[b.0].value.shape().to_vec(), gb)?);
                    }
                    send(*a, g);
                }
                Op::Mul { a, b } => {
                    let va = &nodes[a.0].value;
                    let vb = &nodes[b.0].value;
                    let ga: Vec<f64> = g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                    send(*a, Tensor::new(va.shape().to_vec(), ga)?);
                    send(*b, Tensor::new(vb.shape().to_vec(), gb)?);
                }
                Op::Concat { inputs, axis } => {
                    let (outer, total, inner) = split_axis(g.shape(), *axis);
                    let mut offset = 0;
                    for v in inputs {
                        let shape = nodes[v.0].value.shape().to_vec();
                        let len = shape[*axis];
                        let mut part = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            part.extend_from_slice(&g.data()[start..start + len * inner]);
                        }
                        offset += len;
                        send(*v, Tensor::new(shape, part)?);
                    }
                }
                Op::Relu(a) => {
                    let va = &nodes[a.0].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(va.data())
                        .map(|(d, x)| if *x > 0.0 { *d } else { 0.0 })
                        .collect();
                    send(*a, Tensor::new(va.shape().to_vec(), data)?);
                }
                Op::MaxReduce {
                    input,
                    axis,
                    argmax,
                } => {
                    let shape = nodes[input.0].value.shape().to_vec();
                    let (outer, len, inner) = split_axis(&shape, *axis);
                    let mut data = vec![0.0; outer * len * inner];
                    for o in 0..outer {
                        for i in 0..inner {
                            let r = o * inner + i;
                            data[o * len * inner + argmax[r] * inner + i] += g.data()[r];
                        }
                    }
                    send(*input, Tensor::new(shape, data)?);
                }
                Op::Softmax { input, axis } => {
                    let y = &node.value;
                    let (outer, len, inner) = split_axis(y.shape(), *axis);
                    let mut data = vec![0.0; y.numel()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let base = o * len * inner + i;
                            let dot: f64 = (0..len)
                                .map(|j| g.data()[base + j * inner] * y.data()[base + j * inner])
                                .sum();
                            for j in 0..len {
                                let p = base + j * inner;
                                data[p] = y.data()[p] * (g.data()[p] - dot);
                            }
                        }
                    }
                    send(*input, Tensor::new(y.shape().to_vec(), data)?);
                }
                Op::Scale(a, f) => {
                    send(*a, g.map(|v| v * f));
                }
                Op::GatherRows { input, indices } => {
                    let shape = nodes[input.0].value.shape().to_vec();
                    let width = nodes[input.0].value.numel() / shape[0];
                    let mut data = vec![0.0; nodes[input.0].value.numel()];
                    for (r, &src) in indices.iter().enumerate() {
                        let dst = &mut data[src * width..(src + 1) * width];
                        for (d, v) in dst.iter_mut().zip(&g.data()[r * width..(r + 1) * width]) {
                            *d += v;
                        }
                    }
                    send(*input, Tensor::new(shape, data)?);
                }
                Op::Reshape(a) => {
                    let shape = nodes[a.0].value.shape().to_vec();
                    send(*a, g.reshaped(&shape)?);
                }
                Op::Transpose(a) => {
                    let (r, c) = g.dims2()?;
                    let mut data = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            data[j * r + i] = g.data()[i * c + j];
                        }
                    }
                    send(*a, Tensor::new(vec![c, r], data)?);
                }
                Op::SliceCols { input, start } => {
                    let (r, c) = nodes[input.0].value.dims2()?;
                    let len = g.shape()[1];
                    let mut data = vec![0.0; r * c];
                    for i in 0..r {
                        data[i * c + start..i * c + start + len]
                            .copy_from_slice(&g.data()[i * len..(i + 1) * len]);
                    }
                    send(*input, Tensor::new(vec![r, c], data)?);
                }
                Op::Sum(a) => {
                    let shape = nodes[a.0].value.shape();
                    send(*a, Tensor::full(shape, g.item()));
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                } => {
                    let width = *g.shape().last().unwrap();
                    let rows = g.numel() / width;
                    let gm = nodes[gamma.0].value.data();
                    let mut dx = vec![0.0; g.numel()];
                    let mut dgamma = vec![0.0; width];
                    let mut dbeta = vec![0.0; width];
                    for r in 0..rows {
                        let gr = &g.data()[r * width..(r + 1) * width];
                        let xh = &normalized[r * width..(r + 1) * width];
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..width {
                            let d = gr[j] * gm[j];
                            mean_d += d;
                            mean_dx += d * xh[j];
                            dgamma[j] += gr[j] * xh[j];
                            dbeta[j] += gr[j];
                        }
                        mean_d /= width as f64;
                        mean_dx /= width as f64;
                        for j in 0..width {
                            let d = gr[j] * gm[j];
                            dx[r * width + j] = inv_std[r] * (d - mean_d - xh[j] * mean_dx);
                        }
                    }
                    send(*x, Tensor::new(g.shape().to_vec(), dx)?);
                    send(*gamma, Tensor::new(vec![width], dgamma)?);
                    send(*beta, Tensor::new(vec![width], dbeta)?);
                }
                Op::Custom { inputs, op } => {
                    let values: Vec<&Tensor> = inputs.iter().map(|v| nodes[v.0].value.as_ref()).collect();
                    let input_grads = op.backward(&g, &values)?;
                    for (v, ig) in inputs.iter().zip(input_grads) {
                        if let Some(ig) = ig {
                            if ig.shape() != nodes[v.0].value.shape() {
                                return Err(Error::Shape {
                                    op: op.name(),
                                    lhs: nodes[v.0].value.shape().to_vec(),
                                    rhs: ig.shape().to_vec(),
                                });
                            }
                            send(*v, ig);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
