//! Define-by-run gradient tape.
//!
//! Every operation appends one node holding its forward value and enough
//! bookkeeping to run its adjoint. Node ids are assigned in recording order,
//! which is a topological order, so the backward pass is a single reverse
//! sweep. A tape (and every `Var` pointing into it) is single-threaded; build a
//! fresh tape per forward pass.

use std::cell::{Ref, RefCell};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddBias(usize, usize),
    Tanh(usize),
    Sigmoid(usize),
    Concat { a: usize, b: usize, split: usize },
    Stack(Vec<usize>),
    SelectStep { input: usize, step: usize },
    Reshape(usize),
    Gather { table: usize, ids: Vec<usize> },
    MaskedSoftmax { input: usize, lengths: Vec<usize> },
    WeightedPool { weights: usize, values: usize },
    CrossEntropy { logits: usize, labels: Vec<usize>, probs: Vec<f64> },
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tape-registered tensor.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a differentiable leaf (a parameter or an input we want
    /// gradients for).
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a leaf that never receives a gradient (noise, masks, data).
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn record(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var<'_> {
        let rg = self.requires(inputs);
        self.push(value, op, rg)
    }

    /// Runs the reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(self, loss.tape), "loss belongs to another tape");
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                backprop(&nodes, id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn needs(nodes: &[Node], id: usize) -> bool {
    nodes[id].requires_grad
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: usize, contribution: Vec<f64>) {
    match &mut grads[id] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

fn backprop(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[id];
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            if needs(nodes, a) {
                // dA = G · Bᵀ
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        da[i * k + p] = dot(grow, &bv.data()[p * n..(p + 1) * n]);
                    }
                }
                accumulate(grads, a, da);
            }
            if needs(nodes, b) {
                // dB = Aᵀ · G
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        axpy(av.data()[i * k + p], grow, &mut db[p * n..(p + 1) * n]);
                    }
                }
                accumulate(grads, b, db);
            }
        }
        &Op::MatMulNt(a, b) => {
            // out = A · Bᵀ with A: m×k, B: n×k
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[0]);
            if needs(nodes, a) {
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    let row = &mut da[i * k..(i + 1) * k];
                    for j in 0..n {
                        axpy(g[i * n + j], &bv.data()[j * k..(j + 1) * k], row);
                    }
                }
                accumulate(grads, a, da);
            }
            if needs(nodes, b) {
                let mut db = vec![0.0; n * k];
                for i in 0..m {
                    let arow = &av.data()[i * k..(i + 1) * k];
                    for j in 0..n {
                        axpy(g[i * n + j], arow, &mut db[j * k..(j + 1) * k]);
                    }
                }
                accumulate(grads, b, db);
            }
        }
        &Op::Add(a, b) => {
            if needs(nodes, a) {
                accumulate(grads, a, g.to_vec());
            }
            if needs(nodes, b) {
                accumulate(grads, b, g.to_vec());
            }
        }
        &Op::Sub(a, b) => {
            if needs(nodes, a) {
                accumulate(grads, a, g.to_vec());
            }
            if needs(nodes, b) {
                accumulate(grads, b, g.iter().map(|v| -v).collect());
            }
        }
        &Op::Mul(a, b) => {
            let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
            if needs(nodes, a) {
                accumulate(grads, a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
            }
            if needs(nodes, b) {
                accumulate(grads, b, g.iter().zip(av).map(|(g, a)| g * a).collect());
            }
        }
        &Op::Scale(a, s) => {
            accumulate(grads, a, g.iter().map(|v| v * s).collect());
        }
        &Op::AddBias(x, b) => {
            if needs(nodes, x) {
                accumulate(grads, x, g.to_vec());
            }
            if needs(nodes, b) {
                let n = nodes[b].value.numel();
                let mut db = vec![0.0; n];
                for row in g.chunks_exact(n) {
                    axpy(1.0, row, &mut db);
                }
                accumulate(grads, b, db);
            }
        }
        &Op::Tanh(a) => {
            let d = g
                .iter()
                .zip(out.data())
                .map(|(g, y)| g * (1.0 - y * y))
                .collect();
            accumulate(grads, a, d);
        }
        &Op::Sigmoid(a) => {
            let d = g
                .iter()
                .zip(out.data())
                .map(|(g, y)| g * y * (1.0 - y))
                .collect();
            accumulate(grads, a, d);
        }
        &Op::Concat { a, b, split } => {
            let width = *out.shape().last().unwrap_or(&0);
            let rest = width - split;
            let rows = g.len().checked_div(width).unwrap_or(0);
            if needs(nodes, a) {
                let mut da = Vec::with_capacity(rows * split);
                for r in 0..rows {
                    da.extend_from_slice(&g[r * width..r * width + split]);
                }
                accumulate(grads, a, da);
            }
            if needs(nodes, b) {
                let mut db = Vec::with_capacity(rows * rest);
                for r in 0..rows {
                    db.extend_from_slice(&g[r * width + split..(r + 1) * width]);
                }
                accumulate(grads, b, db);
            }
        }
        Op::Stack(inputs) => {
            let (batch, steps, width) = (out.shape()[0], out.shape()[1], out.shape()[2]);
            for (t, &input) in inputs.iter().enumerate() {
                if !needs(nodes, input) {
                    continue;
                }
                let mut d = Vec::with_capacity(batch * width);
                for b in 0..batch {
                    let base = (b * steps + t) * width;
                    d.extend_from_slice(&g[base..base + width]);
                }
                accumulate(grads, input, d);
            }
        }
        &Op::SelectStep { input, step } => {
            let shape = nodes[input].value.shape();
            let (batch, steps, width) = (shape[0], shape[1], shape[2]);
            let mut d = vec![0.0; batch * steps * width];
            for b in 0..batch {
                let base = (b * steps + step) * width;
                d[base..base + width].copy_from_slice(&g[b * width..(b + 1) * width]);
            }
            accumulate(grads, input, d);
        }
        &Op::Reshape(a) => accumulate(grads, a, g.to_vec()),
        Op::Gather { table, ids } => {
            let tv = &nodes[*table].value;
            let width = tv.shape()[1];
            let mut d = vec![0.0; tv.numel()];
            for (i, &row) in ids.iter().enumerate() {
                axpy(1.0, &g[i * width..(i + 1) * width], &mut d[row * width..(row + 1) * width]);
            }
            accumulate(grads, *table, d);
        }
        Op::MaskedSoftmax { input, lengths } => {
            let steps = *out.shape().last().unwrap();
            let y = out.data();
            let mut d = vec![0.0; y.len()];
            for (r, &len) in lengths.iter().enumerate() {
                let base = r * steps;
                let yr = &y[base..base + len];
                let gr = &g[base..base + len];
                let inner = dot(yr, gr);
                for t in 0..len {
                    d[base + t] = yr[t] * (gr[t] - inner);
                }
            }
            accumulate(grads, *input, d);
        }
        &Op::WeightedPool { weights, values } => {
            let (wv, hv) = (&nodes[weights].value, &nodes[values].value);
            let (batch, steps, width) = (hv.shape()[0], hv.shape()[1], hv.shape()[2]);
            if needs(nodes, weights) {
                let mut dw = vec![0.0; batch * steps];
                for b in 0..batch {
                    let gr = &g[b * width..(b + 1) * width];
                    for t in 0..steps {
                        let base = (b * steps + t) * width;
                        dw[b * steps + t] = dot(gr, &hv.data()[base..base + width]);
                    }
                }
                accumulate(grads, weights, dw);
            }
            if needs(nodes, values) {
                let mut dh = vec![0.0; hv.numel()];
                for b in 0..batch {
                    let gr = &g[b * width..(b + 1) * width];
                    for t in 0..steps {
                        let base = (b * steps + t) * width;
                        axpy(wv.data()[b * steps + t], gr, &mut dh[base..base + width]);
                    }
                }
                accumulate(grads, values, dh);
            }
        }
        Op::CrossEntropy {
            logits,
            labels,
            probs,
        } => {
            let classes = nodes[*logits].value.shape()[1];
            let scale = g[0] / labels.len() as f64;
            let mut d: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            for (b, &label) in labels.iter().enumerate() {
                d[b * classes + label] -= scale;
            }
            accumulate(grads, *logits, d);
        }
        &Op::Sum(a) => {
            let n = nodes[a].value.numel();
            accumulate(grads, a, vec![g[0]; n]);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Result of a backward sweep, indexed by the `Var`s of the same tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Accumulated gradient of `var`; all zeros when the loss does not depend
    /// on it.
    pub fn get(&self, var: Var<'_>) -> Tensor {
        let shape = var.shape();
        match self.grads.get(var.id).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(shape),
        }
    }

    /// Whether any gradient flowed into `var`.
    pub fn reached(&self, var: Var<'_>) -> bool {
        matches!(self.grads.get(var.id), Some(Some(_)))
    }
}

fn shape_err(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn node(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Tensor {
        self.node().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.node().shape().to_vec()
    }

    fn same_tape(&self, other: &Var<'_>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars from different tapes cannot be combined"
        );
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = {
            let x = self.node();
            Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
        };
        self.tape.record(value, op, &[self.id])
    }

    fn zip(&self, other: Var<'t>, name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = {
            let (a, b) = (self.node(), other.node());
            if a.shape() != b.shape() {
                return Err(shape_err(name, &a, &b));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::from_parts(a.shape().to_vec(), data)
        };
        Ok(self.tape.record(value, op, &[self.id, other.id]))
    }

    /// Matrix product `[m×k] · [k×n]`.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = {
            let (a, b) = (self.node(), other.node());
            if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(shape_err("matmul", &a, &b));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    axpy(a.data()[i * k + p], &b.data()[p * n..(p + 1) * n], orow);
                }
            }
            Tensor::from_parts(vec![m, n], out)
        };
        Ok(self.tape.record(value, Op::MatMul(self.id, other.id), &[self.id, other.id]))
    }

    /// `self · weightᵀ` for `self: [m×k]`, `weight: [n×k]`; the shape every
    /// `W x` product in the model takes when `x` is batched along rows.
    pub fn matmul_nt(&self, weight: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&weight);
        let value = {
            let (a, w) = (self.node(), weight.node());
            if a.rank() != 2 || w.rank() != 2 || a.shape()[1] != w.shape()[1] {
                return Err(shape_err("matmul_nt", &a, &w));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], w.shape()[0]);
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let arow = &a.data()[i * k..(i + 1) * k];
                for j in 0..n {
                    out[i * n + j] = dot(arow, &w.data()[j * k..(j + 1) * k]);
                }
            }
            Tensor::from_parts(vec![m, n], out)
        };
        Ok(self.tape.record(value, Op::MatMulNt(self.id, weight.id), &[self.id, weight.id]))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, factor), |v| v * factor)
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    /// Adds a bias vector `[n]` to every row of `self: [.., n]`.
    pub fn add_bias(&self, bias: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&bias);
        let value = {
            let (x, b) = (self.node(), bias.node());
            let n = b.numel();
            if b.rank() != 1 || x.shape().last() != Some(&n) {
                return Err(shape_err("add_bias", &x, &b));
            }
            let mut data = x.data().to_vec();
            for row in data.chunks_exact_mut(n) {
                axpy(1.0, b.data(), row);
            }
            Tensor::from_parts(x.shape().to_vec(), data)
        };
        Ok(self.tape.record(value, Op::AddBias(self.id, bias.id), &[self.id, bias.id]))
    }

    /// Concatenation along the last axis; all leading dimensions must agree.
    pub fn concat(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (value, split) = {
            let (a, b) = (self.node(), other.node());
            let (ra, rb) = (a.shape().len(), b.shape().len());
            if ra == 0 || ra != rb || a.shape()[..ra - 1] != b.shape()[..rb - 1] {
                return Err(shape_err("concat", &a, &b));
            }
            let p = a.shape()[ra - 1];
            let q = b.shape()[rb - 1];
            let rows: usize = a.shape()[..ra - 1].iter().product();
            let mut data = Vec::with_capacity(rows * (p + q));
            for r in 0..rows {
                data.extend_from_slice(&a.data()[r * p..(r + 1) * p]);
                data.extend_from_slice(&b.data()[r * q..(r + 1) * q]);
            }
            let mut shape = a.shape().to_vec();
            shape[ra - 1] = p + q;
            (Tensor::from_parts(shape, data), p)
        };
        Ok(self.tape.record(
            value,
            Op::Concat {
                a: self.id,
                b: other.id,
                split,
            },
            &[self.id, other.id],
        ))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let value = self.node().clone().reshape(shape)?;
        Ok(self.tape.record(value, Op::Reshape(self.id), &[self.id]))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self) -> Var<'t> {
        let total = self.node().data().iter().sum();
        self.tape.record(Tensor::scalar(total), Op::Sum(self.id), &[self.id])
    }

    /// Step `step` of a `[B×T×d]` sequence tensor, as `[B×d]`.
    pub fn select_step(&self, step: usize) -> Result<Var<'t>> {
        let value = {
            let x = self.node();
            if x.rank() != 3 || step >= x.shape()[1] {
                return Err(Error::Contract(format!(
                    "select_step({step}) on shape {:?}",
                    x.shape()
                )));
            }
            let (batch, steps, width) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let mut data = Vec::with_capacity(batch * width);
            for b in 0..batch {
                let base = (b * steps + step) * width;
                data.extend_from_slice(&x.data()[base..base + width]);
            }
            Tensor::from_parts(vec![batch, width], data)
        };
        Ok(self.tape.record(
            value,
            Op::SelectStep {
                input: self.id,
                step,
            },
            &[self.id],
        ))
    }

    /// Rows of a `[V×W]` table picked by `ids`, as `[ids.len()×W]`.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Var<'t>> {
        let value = {
            let table = self.node();
            if table.rank() != 2 {
                return Err(Error::Contract(format!(
                    "gather_rows on shape {:?}",
                    table.shape()
                )));
            }
            let (rows, width) = (table.shape()[0], table.shape()[1]);
            let mut data = Vec::with_capacity(ids.len() * width);
            for &id in ids {
                if id >= rows {
                    return Err(Error::Contract(format!(
                        "row index {id} out of range for table with {rows} rows"
                    )));
                }
                data.extend_from_slice(&table.data()[id * width..(id + 1) * width]);
            }
            Tensor::from_parts(vec![ids.len(), width], data)
        };
        Ok(self.tape.record(
            value,
            Op::Gather {
                table: self.id,
                ids: ids.to_vec(),
            },
            &[self.id],
        ))
    }

    /// Softmax over the first `lengths[r]` entries of each row; the remaining
    /// entries are exactly zero. Accepts `[T]` (one length) or `[B×T]`.
    pub fn masked_softmax(&self, lengths: &[usize]) -> Result<Var<'t>> {
        let value = {
            let x = self.node();
            let (rows, steps) = match x.shape() {
                [t] => (1, *t),
                [b, t] => (*b, *t),
                _ => {
                    return Err(Error::Contract(format!(
                        "masked_softmax on shape {:?}",
                        x.shape()
                    )))
                }
            };
            if lengths.len() != rows {
                return Err(Error::Shape {
                    op: "masked_softmax",
                    lhs: x.shape().to_vec(),
                    rhs: vec![lengths.len()],
                });
            }
            let mut data = vec![0.0; rows * steps];
            for (r, &len) in lengths.iter().enumerate() {
                if len == 0 {
                    return Err(Error::EmptySequence);
                }
                if len > steps {
                    return Err(Error::Contract(format!(
                        "valid length {len} exceeds sequence width {steps}"
                    )));
                }
                let base = r * steps;
                masked_softmax_row(&x.data()[base..base + len], &mut data[base..base + len]);
            }
            Tensor::from_parts(x.shape().to_vec(), data)
        };
        Ok(self.tape.record(
            value,
            Op::MaskedSoftmax {
                input: self.id,
                lengths: lengths.to_vec(),
            },
            &[self.id],
        ))
    }

    /// Cross-entropy of row-wise softmax(`self: [B×C]`) against integer
    /// labels, averaged over the batch.
    pub fn softmax_cross_entropy(&self, labels: &[usize]) -> Result<Var<'t>> {
        let (loss, probs) = {
            let x = self.node();
            if x.rank() != 2 || x.shape()[0] != labels.len() || labels.is_empty() {
                return Err(Error::Shape {
                    op: "softmax_cross_entropy",
                    lhs: x.shape().to_vec(),
                    rhs: vec![labels.len()],
                });
            }
            let classes = x.shape()[1];
            let mut probs = vec![0.0; x.numel()];
            let mut loss = 0.0;
            for (b, &label) in labels.iter().enumerate() {
                if label >= classes {
                    return Err(Error::Contract(format!(
                        "label {label} out of range for {classes} classes"
                    )));
                }
                let row = &x.data()[b * classes..(b + 1) * classes];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                for (c, v) in row.iter().enumerate() {
                    probs[b * classes + c] = (v - log_z).exp();
                }
                loss += log_z - row[label];
            }
            (loss / labels.len() as f64, probs)
        };
        Ok(self.tape.record(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: self.id,
                labels: labels.to_vec(),
                probs,
            },
            &[self.id],
        ))
    }
}

/// `[B×d]` steps stacked into a `[B×T×d]` sequence tensor.
pub fn stack_steps<'t>(steps: &[Var<'t>]) -> Result<Var<'t>> {
    let first = steps
        .first()
        .ok_or_else(|| Error::Contract("stack_steps needs at least one step".into()))?;
    let tape = first.tape;
    let value = {
        let nodes = tape.nodes.borrow();
        let shape = nodes[first.id].value.shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::Contract(format!("stack_steps on shape {shape:?}")));
        }
        let (batch, width) = (shape[0], shape[1]);
        let mut data = vec![0.0; batch * steps.len() * width];
        for (t, step) in steps.iter().enumerate() {
            first.same_tape(step);
            let v = &nodes[step.id].value;
            if v.shape() != shape.as_slice() {
                return Err(shape_err("stack_steps", &nodes[first.id].value, v));
            }
            for b in 0..batch {
                let dst = (b * steps.len() + t) * width;
                data[dst..dst + width].copy_from_slice(&v.data()[b * width..(b + 1) * width]);
            }
        }
        Tensor::from_parts(vec![batch, steps.len(), width], data)
    };
    let ids: Vec<usize> = steps.iter().map(|s| s.id).collect();
    Ok(tape.record(value, Op::Stack(ids.clone()), &ids))
}

/// `r[b] = Σ_t weights[b,t] · values[b,t,:]` for `weights: [B×T]`,
/// `values: [B×T×d]`.
pub fn weighted_pool<'t>(weights: Var<'t>, values: Var<'t>) -> Result<Var<'t>> {
    weights.same_tape(&values);
    let value = {
        let (w, h) = (weights.node(), values.node());
        if h.rank() != 3 || w.rank() != 2 || w.shape() != &h.shape()[..2] {
            return Err(shape_err("weighted_pool", &w, &h));
        }
        let (batch, steps, width) = (h.shape()[0], h.shape()[1], h.shape()[2]);
        let mut data = vec![0.0; batch * width];
        for b in 0..batch {
            let row = &mut data[b * width..(b + 1) * width];
            for t in 0..steps {
                let base = (b * steps + t) * width;
                axpy(w.data()[b * steps + t], &h.data()[base..base + width], row);
            }
        }
        Tensor::from_parts(vec![batch, width], data)
    };
    Ok(weights.tape.record(
        value,
        Op::WeightedPool {
            weights: weights.id,
            values: values.id,
        },
        &[weights.id, values.id],
    ))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of `scores` into `out` (same length, non-empty).
pub(crate) fn masked_softmax_row(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}
