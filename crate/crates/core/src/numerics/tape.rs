//! Reverse-mode automatic differentiation over 2-D `f64` values.
//!
//! Every operation appends a node to the tape; a node only refers to
//! earlier nodes, so the tape is already in topological order and
//! `backward` is a single reverse sweep.

use std::ops::Deref;

use rand::Rng;

use super::{NumericsError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    None,
    Row,
    Scalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<f64>,
        count: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather(Var, Vec<usize>),
    Select(Vec<bool>, Var, Var),
    RepeatRows(Var, usize),
    Reshape(Var),
    GroupWeightedSum(Var, Var),
    Sum(Var),
    Scale(Var, Vec<f64>),
}

enum Storage<'a> {
    Owned(Vec<f64>),
    Borrowed(&'a [f64]),
}

impl Deref for Storage<'_> {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        match self {
            Storage::Owned(v) => v,
            Storage::Borrowed(s) => s,
        }
    }
}

struct Node<'a> {
    rows: usize,
    cols: usize,
    value: Storage<'a>,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Recording,
    Backpropagated,
}

/// Record of primitive operations. Leaves may borrow parameter tensors for
/// the tape's lifetime so large embedding tables are never copied.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    state: State,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &str, detail: String) -> NumericsError {
    NumericsError::Shape(format!("{op}: {detail}"))
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            state: State::Recording,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        rows: usize,
        cols: usize,
        value: Vec<f64>,
        op: Op,
        requires_grad: bool,
    ) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value: Storage::Owned(value),
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<'a> {
        &self.nodes[v.0]
    }

    /// Records a tensor without copying it. Gradients flow to it iff the
    /// tensor has `requires_grad` set.
    pub fn leaf(&mut self, t: &'a Tensor) -> Var {
        let (rows, cols) = t.dims2();
        self.nodes.push(Node {
            rows,
            cols,
            value: Storage::Borrowed(t.data()),
            op: Op::Leaf,
            requires_grad: t.requires_grad(),
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an owned `rows × cols` value.
    pub fn input(
        &mut self,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        requires_grad: bool,
    ) -> Result<Var, NumericsError> {
        if rows * cols != data.len() {
            return Err(shape_err(
                "input",
                format!("{rows}x{cols} from {} values", data.len()),
            ));
        }
        Ok(self.push(rows, cols, data, Op::Leaf, requires_grad))
    }

    pub fn constant(
        &mut self,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    ) -> Result<Var, NumericsError> {
        self.input(rows, cols, data, false)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(vec![n.rows, n.cols], n.value.to_vec()).expect("node shape is consistent")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node(v).grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.nodes[v.0].grad.take()
    }

    fn broadcast_kind(&self, op: &str, a: Var, b: Var) -> Result<Broadcast, NumericsError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if (ar, ac) == (br, bc) {
            Ok(Broadcast::None)
        } else if br == 1 && bc == ac {
            Ok(Broadcast::Row)
        } else if br == 1 && bc == 1 {
            Ok(Broadcast::Scalar)
        } else {
            Err(shape_err(op, format!("{ar}x{ac} with {br}x{bc}")))
        }
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Vec<f64>, Broadcast), NumericsError> {
        let kind = self.broadcast_kind(name, a, b)?;
        let (rows, cols) = self.shape(a);
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(rows * cols);
        match kind {
            Broadcast::None => out.extend(av.iter().zip(bv.iter()).map(|(&x, &y)| f(x, y))),
            Broadcast::Row => {
                for r in 0..rows {
                    let row = &av[r * cols..(r + 1) * cols];
                    out.extend(row.iter().zip(bv.iter()).map(|(&x, &y)| f(x, y)));
                }
            }
            Broadcast::Scalar => {
                let s = bv[0];
                out.extend(av.iter().map(|&x| f(x, s)));
            }
        }
        Ok((out, kind))
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.node(v).requires_grad)
    }

    /// `a · b` for `a: m×k`, `b: k×n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(m, n, out, Op::MatMul(a, b), rg))
    }

    /// Elementwise sum. `b` may be a single row or a scalar broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (out, kind) = self.binary(a, b, "add", |x, y| x + y)?;
        let (r, c) = self.shape(a);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(r, c, out, Op::Add(a, b, kind), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (out, kind) = self.binary(a, b, "sub", |x, y| x - y)?;
        let (r, c) = self.shape(a);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(r, c, out, Op::Sub(a, b, kind), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (out, kind) = self.binary(a, b, "mul", |x, y| x * y)?;
        let (r, c) = self.shape(a);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(r, c, out, Op::Mul(a, b, kind), rg))
    }

    /// `scale · x + shift` with constant scalars.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| scale * v + shift).collect();
        let rg = self.any_grad(&[x]);
        self.push(r, c, out, Op::Affine(x, scale), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        let rg = self.any_grad(&[x]);
        self.push(r, c, out, Op::Tanh(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        let rg = self.any_grad(&[x]);
        self.push(r, c, out, Op::Sigmoid(x), rg)
    }

    /// Row-wise softmax. Entries whose mask is `false` get exactly zero
    /// probability; every row needs at least one unmasked entry.
    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var, NumericsError> {
        let (rows, cols) = self.shape(x);
        if let Some(m) = mask {
            if m.len() != rows * cols {
                return Err(shape_err(
                    "softmax",
                    format!("mask of {} for {rows}x{cols}", m.len()),
                ));
            }
        }
        let xv = self.value(x);
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row_mask = mask.map(|m| &m[r * cols..(r + 1) * cols]);
            softmax_row(
                &xv[r * cols..(r + 1) * cols],
                row_mask,
                &mut out[r * cols..(r + 1) * cols],
            )
            .map_err(|_| NumericsError::Domain(format!("softmax row {r} is fully masked")))?;
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(rows, cols, out, Op::Softmax(x), rg))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`, over rows whose `mask` entry is `true`.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<Var, NumericsError> {
        let (rows, cols) = self.shape(logits);
        if targets.len() != rows || mask.len() != rows {
            return Err(shape_err(
                "cross_entropy",
                format!(
                    "{rows} rows, {} targets, {} mask entries",
                    targets.len(),
                    mask.len()
                ),
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(NumericsError::Domain(
                "cross_entropy over fully masked targets".into(),
            ));
        }
        let lv = self.value(logits);
        let mut probs = vec![0.0; rows * cols];
        let mut total = 0.0;
        for r in 0..rows {
            if !mask[r] {
                continue;
            }
            let t = targets[r];
            if t >= cols {
                return Err(shape_err(
                    "cross_entropy",
                    format!("target {t} outside {cols} classes"),
                ));
            }
            let row = &lv[r * cols..(r + 1) * cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            total += log_z - row[t];
            for (p, &v) in probs[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *p = (v - log_z).exp();
            }
        }
        let loss = total / count as f64;
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            rg,
        ))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let rows = parts
            .first()
            .map(|&p| self.shape(p).0)
            .ok_or_else(|| shape_err("concat_cols", "no parts".into()))?;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(shape_err("concat_cols", "row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(rows, cols, out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Vertical concatenation of matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let cols = parts
            .first()
            .map(|&p| self.shape(p).1)
            .ok_or_else(|| shape_err("concat_rows", "no parts".into()))?;
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return Err(shape_err("concat_rows", "column counts differ".into()));
        }
        let rows: usize = parts.iter().map(|&p| self.shape(p).0).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        let rg = self.any_grad(parts);
        Ok(self.push(rows, cols, out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumericsError> {
        let (rows, cols) = self.shape(table);
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(NumericsError::Range {
                    index: id,
                    len: rows,
                });
            }
            out.extend_from_slice(&tv[id * cols..(id + 1) * cols]);
        }
        let rg = self.any_grad(&[table]);
        Ok(self.push(ids.len(), cols, out, Op::Gather(table, ids.to_vec()), rg))
    }

    /// Row-wise choice: row `i` comes from `a` when `mask[i]`, otherwise from `b`.
    pub fn select_rows(&mut self, mask: &[bool], a: Var, b: Var) -> Result<Var, NumericsError> {
        let (rows, cols) = self.shape(a);
        if self.shape(b) != (rows, cols) || mask.len() != rows {
            return Err(shape_err(
                "select_rows",
                format!("{rows}x{cols}, mask {}", mask.len()),
            ));
        }
        let mut out = Vec::with_capacity(rows * cols);
        for (r, &m) in mask.iter().enumerate() {
            let src = if m { self.value(a) } else { self.value(b) };
            out.extend_from_slice(&src[r * cols..(r + 1) * cols]);
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(rows, cols, out, Op::Select(mask.to_vec(), a, b), rg))
    }

    /// Output row `b * times + t` is input row `b`.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Var {
        let (rows, cols) = self.shape(x);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(rows * times * cols);
        for r in 0..rows {
            for _ in 0..times {
                out.extend_from_slice(&xv[r * cols..(r + 1) * cols]);
            }
        }
        let rg = self.any_grad(&[x]);
        self.push(rows * times, cols, out, Op::RepeatRows(x, times), rg)
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var, NumericsError> {
        let (r, c) = self.shape(x);
        if r * c != rows * cols {
            return Err(shape_err("reshape", format!("{r}x{c} to {rows}x{cols}")));
        }
        let out = self.value(x).to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push(rows, cols, out, Op::Reshape(x), rg))
    }

    /// Per-group weighted sum: with `weights: B×T` and `values: (B·T)×D`,
    /// output row `b` is `Σ_t weights[b,t] · values[b·T + t]`.
    pub fn group_weighted_sum(&mut self, weights: Var, values: Var) -> Result<Var, NumericsError> {
        let (b, t) = self.shape(weights);
        let (vr, d) = self.shape(values);
        if vr != b * t {
            return Err(shape_err(
                "group_weighted_sum",
                format!("weights {b}x{t}, values {vr}x{d}"),
            ));
        }
        let wv = self.value(weights);
        let vv = self.value(values);
        let mut out = vec![0.0; b * d];
        for g in 0..b {
            let row = &mut out[g * d..(g + 1) * d];
            for s in 0..t {
                let w = wv[g * t + s];
                let src = &vv[(g * t + s) * d..(g * t + s + 1) * d];
                row.iter_mut().zip(src).for_each(|(o, &v)| *o += w * v);
            }
        }
        let rg = self.any_grad(&[weights, values]);
        Ok(self.push(b, d, out, Op::GroupWeightedSum(weights, values), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.any_grad(&[x]);
        self.push(1, 1, vec![s], Op::Sum(x), rg)
    }

    /// Multiplies by a constant same-shape factor tensor.
    pub fn scale_by(&mut self, x: Var, factors: Vec<f64>) -> Result<Var, NumericsError> {
        let (r, c) = self.shape(x);
        if factors.len() != r * c {
            return Err(shape_err(
                "scale_by",
                format!("{} factors for {r}x{c}", factors.len()),
            ));
        }
        let out = self
            .value(x)
            .iter()
            .zip(&factors)
            .map(|(v, f)| v * f)
            .collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(r, c, out, Op::Scale(x, factors), rg))
    }

    /// Inverted dropout: each entry is kept with probability `1 - p` and
    /// scaled by `1 / (1 - p)`. With `p == 0` the input is returned unchanged.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var, NumericsError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::Domain(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let (r, c) = self.shape(x);
        let factors = (0..r * c)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.scale_by(x, factors)
    }

    /// Clears all gradients so `backward` may run again.
    pub fn reset(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.state = State::Recording;
    }

    /// Propagates `∂loss/∂node` to every node that requires a gradient.
    /// Gradients accumulate across multiple uses of the same node.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericsError> {
        if self.state == State::Backpropagated {
            return Err(NumericsError::AlreadyBackpropagated);
        }
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(NumericsError::NotScalar { rows: r, cols: c });
        }
        self.state = State::Backpropagated;
        if !self.node(loss).requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            if !matches!(self.nodes[i].op, Op::Leaf) {
                self.propagate(i, &g);
            }
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, f: impl FnOnce(&mut [f64], &Self)) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let len = self.nodes[v.0].value.len();
        let mut acc = self.nodes[v.0]
            .grad
            .take()
            .unwrap_or_else(|| vec![0.0; len]);
        f(&mut acc, self);
        self.nodes[v.0].grad = Some(acc);
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let (rows, cols) = (self.nodes[i].rows, self.nodes[i].cols);
        // Temporarily detach the op so `self` can be borrowed mutably.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = cols;
                self.accumulate(*a, |acc, t| {
                    // dA += G · Bᵀ
                    let bv = t.value(*b);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for j in 0..k {
                            let brow = &bv[j * n..(j + 1) * n];
                            acc[r * k + j] += dot(grow, brow);
                        }
                    }
                });
                self.accumulate(*b, |acc, t| {
                    // dB += Aᵀ · G
                    let av = t.value(*a);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for j in 0..k {
                            let a_rj = av[r * k + j];
                            if a_rj != 0.0 {
                                acc[j * n..(j + 1) * n]
                                    .iter_mut()
                                    .zip(grow)
                                    .for_each(|(x, &y)| *x += a_rj * y);
                            }
                        }
                    }
                });
            }
            Op::Add(a, b, kind) | Op::Sub(a, b, kind) => {
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                self.accumulate(*a, |acc, _| add_into(acc, g));
                self.accumulate(*b, |acc, _| {
                    reduce_broadcast(acc, g, *kind, cols, |x| sign * x)
                });
            }
            Op::Mul(a, b, kind) => {
                let kind = *kind;
                self.accumulate(*a, |acc, t| {
                    let bv = t.value(*b);
                    for (idx, (x, &gv)) in acc.iter_mut().zip(g).enumerate() {
                        *x += gv * broadcast_at(bv, kind, idx, cols);
                    }
                });
                self.accumulate(*b, |acc, t| {
                    let av = t.value(*a);
                    let prod: Vec<f64> = g.iter().zip(av).map(|(x, y)| x * y).collect();
                    reduce_broadcast(acc, &prod, kind, cols, |x| x);
                });
            }
            Op::Affine(x, s) => {
                let s = *s;
                self.accumulate(*x, |acc, _| {
                    acc.iter_mut().zip(g).for_each(|(a, &gv)| *a += s * gv)
                });
            }
            Op::Tanh(x) => {
                let y = self.nodes[i].value.to_vec();
                self.accumulate(*x, |acc, _| {
                    for ((a, &gv), &yv) in acc.iter_mut().zip(g).zip(&y) {
                        *a += gv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[i].value.to_vec();
                self.accumulate(*x, |acc, _| {
                    for ((a, &gv), &yv) in acc.iter_mut().zip(g).zip(&y) {
                        *a += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Softmax(x) => {
                let y = self.nodes[i].value.to_vec();
                self.accumulate(*x, |acc, _| {
                    for r in 0..rows {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let inner = dot(yr, gr);
                        for j in 0..cols {
                            acc[r * cols + j] += yr[j] * (gr[j] - inner);
                        }
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            } => {
                let scale = g[0] / *count as f64;
                let v = self.shape(*logits).1;
                self.accumulate(*logits, |acc, _| {
                    for (r, (&t, &m)) in targets.iter().zip(mask).enumerate() {
                        if !m {
                            continue;
                        }
                        for j in 0..v {
                            acc[r * v + j] += scale * probs[r * v + j];
                        }
                        acc[r * v + t] -= scale;
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p).1;
                    self.accumulate(p, |acc, _| {
                        for r in 0..rows {
                            let src = &g[r * cols + offset..r * cols + offset + c];
                            add_into(&mut acc[r * c..(r + 1) * c], src);
                        }
                    });
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.len();
                    self.accumulate(p, |acc, _| add_into(acc, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::Gather(table, ids) => {
                self.accumulate(*table, |acc, _| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(
                            &mut acc[id * cols..(id + 1) * cols],
                            &g[r * cols..(r + 1) * cols],
                        );
                    }
                });
            }
            Op::Select(mask, a, b) => {
                for (src, pick) in [(*a, true), (*b, false)] {
                    self.accumulate(src, |acc, _| {
                        for (r, &m) in mask.iter().enumerate() {
                            if m == pick {
                                add_into(
                                    &mut acc[r * cols..(r + 1) * cols],
                                    &g[r * cols..(r + 1) * cols],
                                );
                            }
                        }
                    });
                }
            }
            Op::RepeatRows(x, times) => {
                let times = *times;
                self.accumulate(*x, |acc, _| {
                    for (out_row, chunk) in g.chunks(cols).enumerate() {
                        let r = out_row / times;
                        add_into(&mut acc[r * cols..(r + 1) * cols], chunk);
                    }
                });
            }
            Op::Reshape(x) => self.accumulate(*x, |acc, _| add_into(acc, g)),
            Op::GroupWeightedSum(w, vals) => {
                let (b, t) = self.shape(*w);
                let d = cols;
                self.accumulate(*w, |acc, tape| {
                    let vv = tape.value(*vals);
                    for gi in 0..b {
                        let grow = &g[gi * d..(gi + 1) * d];
                        for s in 0..t {
                            acc[gi * t + s] +=
                                dot(grow, &vv[(gi * t + s) * d..(gi * t + s + 1) * d]);
                        }
                    }
                });
                self.accumulate(*vals, |acc, tape| {
                    let wv = tape.value(*w);
                    for gi in 0..b {
                        let grow = &g[gi * d..(gi + 1) * d];
                        for s in 0..t {
                            let wt = wv[gi * t + s];
                            let row = &mut acc[(gi * t + s) * d..(gi * t + s + 1) * d];
                            row.iter_mut().zip(grow).for_each(|(a, &gv)| *a += wt * gv);
                        }
                    }
                });
            }
            Op::Sum(x) => {
                let g0 = g[0];
                self.accumulate(*x, |acc, _| acc.iter_mut().for_each(|a| *a += g0));
            }
            Op::Scale(x, factors) => {
                self.accumulate(*x, |acc, _| {
                    for ((a, &gv), &f) in acc.iter_mut().zip(g).zip(factors) {
                        *a += gv * f;
                    }
                });
            }
        }
        self.nodes[i].op = op;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of one row. Errors when every entry is masked.
pub(crate) fn softmax_row(x: &[f64], mask: Option<&[bool]>, out: &mut [f64]) -> Result<(), ()> {
    let live = |j: usize| mask.is_none_or(|m| m[j]);
    let max = (0..x.len())
        .filter(|&j| live(j))
        .map(|j| x[j])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY && !(0..x.len()).any(live) {
        return Err(());
    }
    let mut sum = 0.0;
    for j in 0..x.len() {
        out[j] = if live(j) { (x[j] - max).exp() } else { 0.0 };
        sum += out[j];
    }
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
}

fn broadcast_at(b: &[f64], kind: Broadcast, idx: usize, cols: usize) -> f64 {
    match kind {
        Broadcast::None => b[idx],
        Broadcast::Row => b[idx % cols],
        Broadcast::Scalar => b[0],
    }
}

fn reduce_broadcast(
    acc: &mut [f64],
    g: &[f64],
    kind: Broadcast,
    cols: usize,
    f: impl Fn(f64) -> f64,
) {
    match kind {
        Broadcast::None => acc.iter_mut().zip(g).for_each(|(a, &x)| *a += f(x)),
        Broadcast::Row => {
            for (idx, &x) in g.iter().enumerate() {
                acc[idx % cols] += f(x);
            }
        }
        Broadcast::Scalar => acc[0] += f(g.iter().sum()),
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        for j in 0..k {
            let a_rj = a[r * k + j];
            if a_rj == 0.0 {
                continue;
            }
            orow.iter_mut()
                .zip(&b[j * n..(j + 1) * n])
                .for_each(|(o, &bv)| *o += a_rj * bv);
        }
    }
}
