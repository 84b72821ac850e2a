use std::sync::atomic::{AtomicU64, Ordering};

use super::flops::FlopCounter;
use super::kernels::{self, axis_split};
use super::Tensor;
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a particular [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    AddBias(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Relu(Var),
    Sigmoid(Var),
    Abs(Var),
    Sqrt(Var),
    Square(Var),
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Permute { x: Var, src_offsets: Vec<usize> },
    Reshape(Var),
    GatherRows { x: Var, rows: Vec<Option<usize>> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SumAll(Var),
    SumLast(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation and differentiates it in reverse.
///
/// Nodes are appended in execution order, so the node list is already a
/// topological order and backward is a single reverse sweep.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    scope: String,
    flops: FlopCounter,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

const LN_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
            scope: "unscoped".to_string(),
            flops: FlopCounter::new(),
        }
    }

    /// Sets the label that subsequent operations charge their cost to.
    /// Returns the previous label.
    pub fn set_scope(&mut self, scope: &str) -> String {
        std::mem::replace(&mut self.scope, scope.to_string())
    }

    pub fn scope(&self) -> &str {
        &self.scope
    }

    pub fn flops(&self) -> &FlopCounter {
        &self.flops
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input: never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf: receives a gradient on [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.node(v).value.shape()
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.check(v).ok()?;
        self.grads.get(v.index).and_then(Option::as_ref)
    }

    fn node(&self, v: Var) -> &Node {
        assert_eq!(v.tape, self.id, "variable belongs to another tape");
        &self.nodes[v.index]
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Tape("variable is not recorded on this tape".into()));
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|&v| self.node(v).requires_grad)
    }

    fn count_elementwise(&mut self, n: usize) {
        let scope = self.scope.clone();
        self.flops.add_elementwise(&scope, n as u64);
    }

    fn count_macs(&mut self, n: usize) {
        let scope = self.scope.clone();
        self.flops.add_macs(&scope, n as u64);
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    // ---- linear algebra ------------------------------------------------

    /// `[a×b]·[b×c]`, charged `a·b·c` MACs.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner extents differ: [{m}x{k}] x [{k2}x{n}]"
            )));
        }
        let mut out = vec![0.0; m * n];
        kernels::mm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.count_macs(m * k * n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul(a, b), rg))
    }

    /// Batched product over the leading axis: `[B×n×k]·[B×k×p]`, or with
    /// `trans_b`, `[B×n×k]·[B×p×k]ᵀ`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (&[ba, n, k], &[bb, r, c]) = (&sa[..], &sb[..]) else {
            return Err(Error::Shape(format!("batch_matmul needs rank-3 inputs, got {sa:?} and {sb:?}")));
        };
        let (kb, p) = if trans_b { (c, r) } else { (r, c) };
        if ba != bb || k != kb {
            return Err(Error::Shape(format!("batch_matmul shapes {sa:?} and {sb:?} (trans_b={trans_b})")));
        }
        let mut out = vec![0.0; ba * n * p];
        {
            let (av, bv) = (self.value(a).data(), self.value(b).data());
            for i in 0..ba {
                let a_i = &av[i * n * k..(i + 1) * n * k];
                let b_i = &bv[i * k * p..(i + 1) * k * p];
                let o = &mut out[i * n * p..(i + 1) * n * p];
                if trans_b {
                    kernels::mm_nt(a_i, b_i, o, n, k, p);
                } else {
                    kernels::mm_nn(a_i, b_i, o, n, k, p);
                }
            }
        }
        self.count_macs(ba * n * k * p);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape: vec![ba, n, p], data: out }, Op::BatchMatMul { a, b, trans_b }, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        if self.value(x).rank() != 2 {
            return Err(Error::Shape("transpose needs a matrix".into()));
        }
        self.permute(x, &[1, 0])
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Shape(format!("invalid permutation {perm:?} for shape {shape:?}")));
        }
        let src_offsets = kernels::permute_offsets(&shape, perm);
        let src = self.value(x).data();
        let data = src_offsets.iter().map(|&o| src[o]).collect();
        let out_shape = perm.iter().map(|&p| shape[p]).collect();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor { shape: out_shape, data }, Op::Permute { x, src_offsets }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    // ---- elementwise ---------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.count_elementwise(v.len());
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    /// Adds a vector along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.check(x)?;
        self.check(bias)?;
        let last = *self.shape(x).last().expect("tensors have rank >= 1");
        if self.value(bias).len() != last {
            return Err(Error::Shape(format!(
                "bias of length {} for last extent {last}",
                self.value(bias).len()
            )));
        }
        let mut v = self.value(x).clone();
        let b = self.value(bias).data();
        for row in v.data.chunks_mut(last) {
            for (o, bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        self.count_elementwise(v.len());
        let rg = self.rg(&[x, bias]);
        Ok(self.push(v, Op::AddBias(x, bias), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.count_elementwise(v.len());
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.count_elementwise(v.len());
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.check(x)?;
        let v = self.value(x).map(|a| a * s);
        self.count_elementwise(v.len());
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Scale(x, s), rg))
    }

    fn unary(&mut self, x: Var, f: fn(f64) -> f64, op: Op) -> Result<Var> {
        self.check(x)?;
        let v = self.value(x).map(f);
        self.count_elementwise(v.len());
        let rg = self.rg(&[x]);
        Ok(self.push(v, op, rg))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, kernels::gelu, Op::Gelu(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |a| a.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, kernels::sigmoid, Op::Sigmoid(x))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.unary(x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |a| a * a, Op::Square(x))
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Shape(format!("softmax axis {axis} out of range for {shape:?}")));
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * n * inner + k * inner + i;
                let max = (0..n).map(|k| src[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for k in 0..n {
                    let e = (src[at(k)] - max).exp();
                    out[at(k)] = e;
                    sum += e;
                }
                for k in 0..n {
                    out[at(k)] /= sum;
                }
            }
        }
        self.count_elementwise(out.len());
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor { shape, data: out }, Op::Softmax { x, axis }, rg))
    }

    /// Normalizes over the last axis (eps = 1e-5), then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        self.check(x)?;
        self.check(gain)?;
        self.check(bias)?;
        let shape = self.shape(x).to_vec();
        let d = *shape.last().expect("rank >= 1");
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(Error::Shape(format!("layer_norm affine params must have length {d}")));
        }
        let src = self.value(x).data();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = src.len() / d;
        let mut xhat = vec![0.0; src.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; src.len()];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for c in 0..d {
                let h = (row[c] - mean) * rs;
                xhat[r * d + c] = h;
                out[r * d + c] = h * g[c] + b[c];
            }
        }
        self.count_elementwise(out.len());
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(Tensor { shape, data: out }, Op::LayerNorm { x, gain, bias, xhat, rstd }, rg))
    }

    // ---- indexing --------------------------------------------------------

    /// Selects rows (slices along axis 0) in the given order.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let rows: Vec<Option<usize>> = rows.iter().map(|&r| Some(r)).collect();
        self.gather_rows_padded(x, &rows)
    }

    /// Like [`Tape::gather_rows`], with `None` producing an all-zero row.
    pub fn gather_rows_padded(&mut self, x: Var, rows: &[Option<usize>]) -> Result<Var> {
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        let n = shape[0];
        let width: usize = shape[1..].iter().product();
        if rows.is_empty() {
            return Err(Error::Shape("gather_rows with no rows".into()));
        }
        if let Some(bad) = rows.iter().flatten().find(|&&r| r >= n) {
            return Err(Error::Index(format!("row {bad} out of range for {n} rows")));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows.len() * width);
        for r in rows {
            match r {
                Some(r) => data.extend_from_slice(&src[r * width..(r + 1) * width]),
                None => data.extend(std::iter::repeat_n(0.0, width)),
            }
        }
        let mut out_shape = shape;
        out_shape[0] = rows.len();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor { shape: out_shape, data }, Op::GatherRows { x, rows: rows.to_vec() }, rg))
    }

    /// Stacks inputs along axis 0; trailing extents must agree.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        for &x in xs {
            self.check(x)?;
        }
        let tail = self.shape(first)[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &x in xs {
            if self.shape(x)[1..] != tail[..] {
                return Err(Error::Shape(format!(
                    "concat_rows trailing extents {:?} vs {tail:?}",
                    &self.shape(x)[1..]
                )));
            }
            rows += self.shape(x)[0];
            data.extend_from_slice(self.value(x).data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let rg = self.rg(xs);
        Ok(self.push(Tensor { shape, data }, Op::ConcatRows(xs.to_vec()), rg))
    }

    /// Joins matrices side by side.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        for &x in xs {
            self.check(x)?;
        }
        let (rows, _) = self.value(first).dims2()?;
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let (r, c) = self.value(x).dims2()?;
            if r != rows {
                return Err(Error::Shape(format!("concat_cols row counts {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&x, &w) in xs.iter().zip(&widths) {
                data.extend_from_slice(&self.value(x).data()[r * w..(r + 1) * w]);
            }
        }
        let rg = self.rg(xs);
        Ok(self.push(Tensor { shape: vec![rows, total], data }, Op::ConcatCols(xs.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x)?;
        let (rows, cols) = self.value(x).dims2()?;
        if len == 0 || start + len > cols {
            return Err(Error::Index(format!("columns {start}..{} of {cols}", start + len)));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor { shape: vec![rows, len], data }, Op::SliceCols { x, start }, rg))
    }

    // ---- reductions ------------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s = self.value(x).sum();
        self.count_elementwise(self.value(x).len());
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::SumAll(x), rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// Sums over the last axis, dropping it.
    pub fn sum_last(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        let d = *shape.last().expect("rank >= 1");
        let data: Vec<f64> = self.value(x).data().chunks(d).map(|c| c.iter().sum()).collect();
        let out_shape = if shape.len() == 1 { vec![1] } else { shape[..shape.len() - 1].to_vec() };
        self.count_elementwise(self.value(x).len());
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor { shape: out_shape, data }, Op::SumLast(x), rg))
    }

    // ---- reverse sweep ---------------------------------------------------

    /// Populates gradients of the scalar `loss` for every trainable leaf
    /// (and every intermediate) that `loss` depends on.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        if self.value(loss).len() != 1 {
            return Err(Error::Tape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.index] = Some(Tensor::full(self.shape(loss), 1.0));
        for i in (0..=loss.index).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape[0], av.shape[1]);
                let n = bv.shape[1];
                if self.node(*a).requires_grad {
                    let ga = grad_slot(grads, *a, av);
                    kernels::mm_nt(&g.data, &bv.data, &mut ga.data, m, n, k);
                }
                if self.node(*b).requires_grad {
                    let gb = grad_slot(grads, *b, bv);
                    kernels::mm_tn(&av.data, &g.data, &mut gb.data, m, k, n);
                }
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (batch, n, k) = (av.shape[0], av.shape[1], av.shape[2]);
                let p = y.shape[2];
                if self.node(*a).requires_grad {
                    let ga = grad_slot(grads, *a, av);
                    for s in 0..batch {
                        let gs = &g.data[s * n * p..(s + 1) * n * p];
                        let bs = &bv.data[s * k * p..(s + 1) * k * p];
                        let out = &mut ga.data[s * n * k..(s + 1) * n * k];
                        if *trans_b {
                            kernels::mm_nn(gs, bs, out, n, p, k);
                        } else {
                            kernels::mm_nt(gs, bs, out, n, p, k);
                        }
                    }
                }
                if self.node(*b).requires_grad {
                    let gb = grad_slot(grads, *b, bv);
                    for s in 0..batch {
                        let gs = &g.data[s * n * p..(s + 1) * n * p];
                        let as_ = &av.data[s * n * k..(s + 1) * n * k];
                        let out = &mut gb.data[s * k * p..(s + 1) * k * p];
                        if *trans_b {
                            kernels::mm_tn(gs, as_, out, n, p, k);
                        } else {
                            kernels::mm_tn(as_, gs, out, n, k, p);
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| ga.add_assign(g));
                self.accumulate(grads, *b, |gb| gb.add_assign(g));
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, |gx| gx.add_assign(g));
                self.accumulate(grads, *bias, |gb| {
                    let d = gb.len();
                    for row in g.data.chunks(d) {
                        for (o, v) in gb.data.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                });
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| ga.add_assign(g));
                self.accumulate(grads, *b, |gb| {
                    for (o, v) in gb.data.iter_mut().zip(&g.data) {
                        *o -= v;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |ga| {
                    for ((o, gv), bb) in ga.data.iter_mut().zip(&g.data).zip(&bv.data) {
                        *o += gv * bb;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((o, gv), aa) in gb.data.iter_mut().zip(&g.data).zip(&av.data) {
                        *o += gv * aa;
                    }
                });
            }
            Op::Scale(x, s) => self.accumulate(grads, *x, |gx| {
                for (o, gv) in gx.data.iter_mut().zip(&g.data) {
                    *o += gv * s;
                }
            }),
            Op::Gelu(x) => self.pointwise_back(grads, *x, g, |xv, _| kernels::gelu_grad(xv)),
            Op::Relu(x) => self.pointwise_back(grads, *x, g, |xv, _| if xv > 0.0 { 1.0 } else { 0.0 }),
            Op::Sigmoid(x) => {
                let yv = &y.data;
                self.accumulate(grads, *x, |gx| {
                    for ((o, gv), s) in gx.data.iter_mut().zip(&g.data).zip(yv) {
                        *o += gv * s * (1.0 - s);
                    }
                });
            }
            Op::Abs(x) => self.pointwise_back(grads, *x, g, |xv, _| {
                if xv > 0.0 {
                    1.0
                } else if xv < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            Op::Sqrt(x) => {
                let yv = &y.data;
                self.accumulate(grads, *x, |gx| {
                    for ((o, gv), s) in gx.data.iter_mut().zip(&g.data).zip(yv) {
                        if *s > 0.0 {
                            *o += gv * 0.5 / s;
                        }
                    }
                });
            }
            Op::Square(x) => self.pointwise_back(grads, *x, g, |xv, _| 2.0 * xv),
            Op::Softmax { x, axis } => {
                let (outer, n, inner) = axis_split(&y.shape, *axis);
                self.accumulate(grads, *x, |gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| o * n * inner + k * inner + i;
                            let dot: f64 = (0..n).map(|k| g.data[at(k)] * y.data[at(k)]).sum();
                            for k in 0..n {
                                gx.data[at(k)] += y.data[at(k)] * (g.data[at(k)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let gv = self.value(*gain);
                let d = gv.len();
                self.accumulate(grads, *gain, |gg| {
                    for (grow, hrow) in g.data.chunks(d).zip(xhat.chunks(d)) {
                        for c in 0..d {
                            gg.data[c] += grow[c] * hrow[c];
                        }
                    }
                });
                self.accumulate(grads, *bias, |gb| {
                    for grow in g.data.chunks(d) {
                        for c in 0..d {
                            gb.data[c] += grow[c];
                        }
                    }
                });
                self.accumulate(grads, *x, |gx| {
                    let rows = g.data.len() / d;
                    let mut dxhat = vec![0.0; d];
                    for r in 0..rows {
                        let grow = &g.data[r * d..(r + 1) * d];
                        let hrow = &xhat[r * d..(r + 1) * d];
                        for c in 0..d {
                            dxhat[c] = grow[c] * gv.data[c];
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                        let mean_dh = dxhat.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for c in 0..d {
                            gx.data[r * d + c] += rstd[r] * (dxhat[c] - mean_d - hrow[c] * mean_dh);
                        }
                    }
                });
            }
            Op::Permute { x, src_offsets } => self.accumulate(grads, *x, |gx| {
                for (gv, &o) in g.data.iter().zip(src_offsets) {
                    gx.data[o] += gv;
                }
            }),
            Op::Reshape(x) => self.accumulate(grads, *x, |gx| {
                for (o, gv) in gx.data.iter_mut().zip(&g.data) {
                    *o += gv;
                }
            }),
            Op::GatherRows { x, rows } => self.accumulate(grads, *x, |gx| {
                let width = g.len() / rows.len();
                for (k, r) in rows.iter().enumerate() {
                    if let Some(r) = r {
                        for c in 0..width {
                            gx.data[r * width + c] += g.data[k * width + c];
                        }
                    }
                }
            }),
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let n = self.value(x).len();
                    let part = &g.data[offset..offset + n];
                    self.accumulate(grads, x, |gx| {
                        for (o, gv) in gx.data.iter_mut().zip(part) {
                            *o += gv;
                        }
                    });
                    offset += n;
                }
            }
            Op::ConcatCols(xs) => {
                let (rows, total) = (y.shape[0], y.shape[1]);
                let mut col = 0;
                for &x in xs {
                    let w = self.value(x).shape[1];
                    self.accumulate(grads, x, |gx| {
                        for r in 0..rows {
                            for c in 0..w {
                                gx.data[r * w + c] += g.data[r * total + col + c];
                            }
                        }
                    });
                    col += w;
                }
            }
            Op::SliceCols { x, start } => {
                let (rows, len) = (y.shape[0], y.shape[1]);
                let cols = self.value(*x).shape[1];
                self.accumulate(grads, *x, |gx| {
                    for r in 0..rows {
                        for c in 0..len {
                            gx.data[r * cols + start + c] += g.data[r * len + c];
                        }
                    }
                });
            }
            Op::SumAll(x) => {
                let gv = g.data[0];
                self.accumulate(grads, *x, |gx| gx.data.iter_mut().for_each(|o| *o += gv));
            }
            Op::SumLast(x) => {
                let d = *self.value(*x).shape.last().expect("rank >= 1");
                self.accumulate(grads, *x, |gx| {
                    for (row, gv) in gx.data.chunks_mut(d).zip(&g.data) {
                        row.iter_mut().for_each(|o| *o += gv);
                    }
                });
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], x: Var, f: impl FnOnce(&mut Tensor)) {
        if self.nodes[x.index].requires_grad {
            f(grad_slot(grads, x, &self.nodes[x.index].value));
        }
    }

    fn pointwise_back(&self, grads: &mut [Option<Tensor>], x: Var, g: &Tensor, d: impl Fn(f64, f64) -> f64) {
        let xv = &self.nodes[x.index].value;
        self.accumulate(grads, x, |gx| {
            for ((o, gv), &v) in gx.data.iter_mut().zip(&g.data).zip(&xv.data) {
                *o += gv * d(v, *gv);
            }
        });
    }
}

fn grad_slot<'a>(grads: &'a mut [Option<Tensor>], x: Var, like: &Tensor) -> &'a mut Tensor {
    grads[x.index].get_or_insert_with(|| Tensor::zeros(&like.shape))
}
