//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its value; [`backward`] walks the
//! nodes once in reverse creation order and accumulates adjoints additively.
//! Parameters are registered by name and receive an entry in the returned
//! [`GradientSet`] even when the loss does not depend on them.

use crate::error::{NumError, Result};
use crate::grads::GradientSet;
use crate::tensor::{
    check_finite, log_softmax_into, matmul_kernel, matmul_t_kernel, softmax_into, Scalar, Tensor,
    UnaryOp,
};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Linear(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Scale(Var, T),
    Unary(UnaryOp, Var),
    Softmax(Var),
    LogSoftmax(Var),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    MulCol(Var, Var),
    Pick(Var, Vec<usize>),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Clone)]
pub struct Tape<T: Scalar = f64> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, Var)>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn dim_err(op: &'static str, a: &[usize], b: &[usize]) -> NumError {
    NumError::Dimension {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Names of the registered trainable parameters, in registration order.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|(n, _)| n.as_str())
    }

    /// Registers a trainable parameter. Names must be unique per tape.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<Var> {
        let name = name.into();
        if self.params.iter().any(|(n, _)| *n == name) {
            return Err(NumError::Contract(format!(
                "parameter {name:?} registered twice"
            )));
        }
        let v = self.push(value, Op::Leaf, true);
        self.params.push((name, v));
        Ok(v)
    }

    /// Records a value that receives no gradient (inputs, masks).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn record(&mut self, op_name: &'static str, shape: Vec<usize>, data: Vec<T>, op: Op<T>, rg: bool) -> Result<Var> {
        check_finite(op_name, &data)?;
        Ok(self.push(Tensor::from_parts(shape, data), op, rg))
    }

    /// `a · b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(dim_err("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let c = matmul_kernel(ta.data(), tb.data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        self.record("matmul", vec![m, n], c, Op::MatMul(a, b), rg)
    }

    /// `x · wᵀ` where `w` is stored `out × in` (a rank-1 `w` is one output row).
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let (n, k2) = tw.dims2()?;
        if tx.shape().len() != 2 || tx.shape()[1] != k2 {
            return Err(dim_err("linear", tx.shape(), tw.shape()));
        }
        let (m, k) = (tx.shape()[0], tx.shape()[1]);
        let c = matmul_t_kernel(tx.data(), tw.data(), m, k, n);
        let rg = self.rg(x) || self.rg(w);
        self.record("linear", vec![m, n], c, Op::Linear(x, w), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("add", ta.shape(), tb.shape()));
        }
        let c = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.record("add", shape, c, Op::Add(a, b), rg)
    }

    /// Adds a length-`c` bias to every row of an `r × c` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let (_, c) = ta.dims2()?;
        if ta.shape().len() != 2 || tb.numel() != c {
            return Err(dim_err("add_bias", ta.shape(), tb.shape()));
        }
        let b = tb.data();
        let out = ta
            .data()
            .chunks(c)
            .flat_map(|row| row.iter().zip(b).map(|(&x, &y)| x + y))
            .collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(bias);
        self.record("add_bias", shape, out, Op::AddBias(a, bias), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("mul", ta.shape(), tb.shape()));
        }
        let c = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.record("mul", shape, c, Op::Mul(a, b), rg)
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.data().iter().map(|&x| T::one() - x).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a);
        self.record("one_minus", shape, c, Op::OneMinus(a), rg)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.data().iter().map(|&x| x * s).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a);
        self.record("scale", shape, c, Op::Scale(a, s), rg)
    }

    pub fn unary(&mut self, op: UnaryOp, a: Var) -> Result<Var> {
        let out = crate::tensor::apply_unary(op, self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Unary(op, a), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sigmoid, a)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.softmax_impl(a, None)
    }

    /// Row softmax over the entries whose mask is `true`; the rest get weight 0.
    /// Every row needs at least one live entry.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: Vec<bool>) -> Result<Var> {
        let ta = self.value(a);
        if mask.len() != ta.numel() {
            return Err(dim_err("masked_softmax_rows", ta.shape(), &[mask.len()]));
        }
        let (_, c) = ta.dims2()?;
        if mask.chunks(c).any(|row| !row.iter().any(|&m| m)) {
            return Err(NumError::Contract("softmax row with no live entry".into()));
        }
        self.softmax_impl(a, Some(mask))
    }

    fn softmax_impl(&mut self, a: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        let ta = self.value(a);
        check_finite("softmax_rows input", ta.data())?;
        let (r, c) = ta.dims2()?;
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let m = mask.as_ref().map(|m| &m[i * c..(i + 1) * c]);
            softmax_into(&ta.data()[i * c..(i + 1) * c], m, &mut out[i * c..(i + 1) * c]);
        }
        let shape = ta.shape().to_vec();
        let rg = self.rg(a);
        self.record("softmax_rows", shape, out, Op::Softmax(a), rg)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        check_finite("log_softmax_rows input", ta.data())?;
        let (r, c) = ta.dims2()?;
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            log_softmax_into(&ta.data()[i * c..(i + 1) * c], &mut out[i * c..(i + 1) * c]);
        }
        let shape = ta.shape().to_vec();
        let rg = self.rg(a);
        self.record("log_softmax_rows", shape, out, Op::LogSoftmax(a), rg)
    }

    /// Rows `ids` of a `|V| × d` table, as a `len(ids) × d` matrix.
    pub fn gather_rows(&mut self, table: Var, ids: Vec<usize>) -> Result<Var> {
        let tt = self.value(table);
        let (rows, d) = tt.dims2()?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(NumError::Contract(format!(
                "row id {bad} out of range for table with {rows} rows"
            )));
        }
        if ids.is_empty() {
            return Err(NumError::Contract("gather_rows with no ids".into()));
        }
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in &ids {
            out.extend_from_slice(&tt.data()[i * d..(i + 1) * d]);
        }
        let rg = self.rg(table);
        self.record("gather_rows", vec![ids.len(), d], out, Op::GatherRows(table, ids), rg)
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(*parts.first().ok_or_else(|| {
            NumError::Contract("concat_cols of nothing".into())
        })?);
        let r = first.shape()[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 2 || t.shape()[0] != r {
                return Err(dim_err("concat_cols", first.shape(), t.shape()));
            }
            widths.push(t.shape()[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.record("concat_cols", vec![r, total], out, Op::ConcatCols(parts.to_vec()), rg)
    }

    /// Columns `[start, start + len)` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = ta.dims2()?;
        if len == 0 || start + len > c {
            return Err(NumError::Contract(format!(
                "column slice {start}..{} out of range for {c} columns",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&ta.data()[i * c + start..i * c + start + len]);
        }
        let rg = self.rg(a);
        self.record("slice_cols", vec![r, len], out, Op::SliceCols(a, start), rg)
    }

    /// Scales row `i` of `a` by `col[i]`, where `col` is `r × 1`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        let (r, c) = ta.dims2()?;
        if tc.shape() != [r, 1] {
            return Err(dim_err("mul_col", ta.shape(), tc.shape()));
        }
        let out = ta
            .data()
            .chunks(c)
            .zip(tc.data())
            .flat_map(|(row, &s)| row.iter().map(move |&x| x * s))
            .collect();
        let rg = self.rg(a) || self.rg(col);
        self.record("mul_col", vec![r, c], out, Op::MulCol(a, col), rg)
    }

    /// Picks column `idx[i]` from row `i`, giving an `r × 1` matrix.
    pub fn pick(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = ta.dims2()?;
        if idx.len() != r || idx.iter().any(|&j| j >= c) {
            return Err(NumError::Contract(format!(
                "pick indices {idx:?} invalid for shape {:?}",
                ta.shape()
            )));
        }
        let out = idx.iter().enumerate().map(|(i, &j)| ta.data()[i * c + j]).collect();
        let rg = self.rg(a);
        self.record("pick", vec![r, 1], out, Op::Pick(a, idx), rg)
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let s = ta.data().iter().fold(T::zero(), |acc, &x| acc + x);
        let rg = self.rg(a);
        self.record("sum", vec![1], vec![s], Op::Sum(a), rg)
    }

    /// Gradient of the scalar `loss` with respect to every registered parameter.
    pub fn backward(&self, loss: Var) -> Result<GradientSet<T>> {
        backward(self, loss)
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, len: usize, f: impl FnOnce(&mut [T])) {
    let g = slot.get_or_insert_with(|| vec![T::zero(); len]);
    f(g);
}

/// Replays the tape backwards from `loss`, visiting each node at most once.
pub fn backward<T: Scalar>(tape: &Tape<T>, loss: Var) -> Result<GradientSet<T>> {
    let lt = tape.value(loss);
    if !lt.is_scalar() {
        return Err(NumError::Contract(format!(
            "loss must be a scalar, got shape {:?}",
            lt.shape()
        )));
    }
    let n = tape.nodes.len();
    let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
    grads[loss.0] = Some(vec![T::one()]);

    for idx in (0..=loss.0).rev() {
        let Some(g) = grads[idx].take() else { continue };
        let node = &tape.nodes[idx];
        if !node.requires_grad {
            grads[idx] = Some(g);
            continue;
        }
        let val = &node.value;
        macro_rules! want {
            ($v:expr) => {
                tape.nodes[$v.0].requires_grad
            };
        }
        macro_rules! slot {
            ($v:expr) => {{
                let len = tape.nodes[$v.0].value.numel();
                (&mut grads[$v.0], len)
            }};
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (tape.value(*a), tape.value(*b));
                let (m, k, nn) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if want!(a) {
                    // dA = dC · Bᵀ
                    let da = matmul_t_kernel(&g, tb.data(), m, nn, k);
                    let (s, len) = slot!(a);
                    accumulate(s, len, |acc| add_into(acc, &da));
                }
                if want!(b) {
                    // dB = Aᵀ · dC
                    let (s, len) = slot!(b);
                    accumulate(s, len, |acc| {
                        for i in 0..m {
                            for p in 0..k {
                                let aip = ta.data()[i * k + p];
                                for j in 0..nn {
                                    acc[p * nn + j] = acc[p * nn + j] + aip * g[i * nn + j];
                                }
                            }
                        }
                    });
                }
            }
            Op::Linear(x, w) => {
                let (tx, tw) = (tape.value(*x), tape.value(*w));
                let (m, k) = (tx.shape()[0], tx.shape()[1]);
                let nn = val.shape()[1];
                if want!(x) {
                    // dX = dC · W
                    let dx = matmul_kernel(&g, tw.data(), m, nn, k);
                    let (s, len) = slot!(x);
                    accumulate(s, len, |acc| add_into(acc, &dx));
                }
                if want!(w) {
                    // dW = dCᵀ · X
                    let (s, len) = slot!(w);
                    accumulate(s, len, |acc| {
                        for i in 0..m {
                            let xrow = &tx.data()[i * k..(i + 1) * k];
                            for j in 0..nn {
                                let gij = g[i * nn + j];
                                if gij == T::zero() {
                                    continue;
                                }
                                let arow = &mut acc[j * k..(j + 1) * k];
                                for (a, &xv) in arow.iter_mut().zip(xrow) {
                                    *a = *a + gij * xv;
                                }
                            }
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if want!(v) {
                        let (s, len) = slot!(v);
                        accumulate(s, len, |acc| add_into(acc, &g));
                    }
                }
            }
            Op::AddBias(a, b) => {
                if want!(a) {
                    let (s, len) = slot!(a);
                    accumulate(s, len, |acc| add_into(acc, &g));
                }
                if want!(b) {
                    let (s, c) = slot!(b);
                    accumulate(s, c, |acc| {
                        for row in g.chunks(c) {
                            add_into(acc, row);
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (tape.value(*a), tape.value(*b));
                if want!(a) {
                    let (s, len) = slot!(a);
                    accumulate(s, len, |acc| {
                        for ((o, &gi), &bi) in acc.iter_mut().zip(&g).zip(tb.data()) {
                            *o = *o + gi * bi;
                        }
                    });
                }
                if want!(b) {
                    let (s, len) = slot!(b);
                    accumulate(s, len, |acc| {
                        for ((o, &gi), &ai) in acc.iter_mut().zip(&g).zip(ta.data()) {
                            *o = *o + gi * ai;
                        }
                    });
                }
            }
            Op::OneMinus(a) => {
                let (s, len) = slot!(a);
                accumulate(s, len, |acc| {
                    for (o, &gi) in acc.iter_mut().zip(&g) {
                        *o = *o - gi;
                    }
                });
            }
            Op::Scale(a, k) => {
                let (s, len) = slot!(a);
                accumulate(s, len, |acc| {
                    for (o, &gi) in acc.iter_mut().zip(&g) {
                        *o = *o + gi * *k;
                    }
                });
            }
            Op::Unary(op, a) => {
                let x = tape.value(*a).data();
                let y = val.data();
                let (s, len) = slot!(a);
                accumulate(s, len, |acc| {
                    for i in 0..acc.len() {
                        let d = match op {
                            UnaryOp::Tanh => T::one() - y[i] * y[i],
                            UnaryOp::Sigmoid => y[i] * (T::one() - y[i]),
                            UnaryOp::Exp => y[i],
                            UnaryOp::Log => T::one() / x[i],
                        };
                        acc[i] = acc[i] + g[i] * d;
                    }
                });
            }
            Op::Softmax(a) => {
                let (_, c) = val.dims2()?;
                let y = val.data();
                let (s, len) = slot!(a);
                accumulate(s, len, |acc| {
                    for ((yr, gr), ar) in y.chunks(c).zip(g.chunks(c)).zip(acc.chunks_mut(c)) {
                        let inner = yr.iter().zip(gr).fold(T::zero(), |t, (&yi, &gi)| t + yi * gi);
                        for ((o, &yi), &gi) in ar.iter_mut().zip(yr).zip(gr) {
                            *o = *o + yi * (gi - inner);
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let (_, c) = val.dims2()?;
                let y = val.data();
                let (s, len) = slot!(a);
                accumulate(s, len, |acc| {
                    for ((yr, gr), ar) in y.chunks(c).zip(g.chunks(c)).zip(acc.chunks_mut(c)) {
                        let gsum = gr.iter().fold(T::zero(), |t, &gi| t + gi);
                        for ((o, &yi), &gi) in ar.iter_mut().zip(yr).zip(gr) {
                            *o = *o + gi - yi.exp() * gsum;
                        }
                    }
                });
            }
            Op::GatherRows(table, ids) => {
                let d = val.shape()[1];
                let (s, len) = slot!(table);
                accumulate(s, len, |acc| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut acc[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let (r, total) = val.dims2()?;
                let mut offset = 0;
                for p in parts {
                    let w = tape.value(*p).shape()[1];
                    if want!(p) {
                        let (s, len) = slot!(p);
                        accumulate(s, len, |acc| {
                            for i in 0..r {
                                add_into(
                                    &mut acc[i * w..(i + 1) * w],
                                    &g[i * total + offset..i * total + offset + w],
                                );
                            }
                        });
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, w) = val.dims2()?;
                let c = tape.value(*a).shape()[1];
                let (s, len) = slot!(a);
                accumulate(s, len, |acc| {
                    for i in 0..r {
                        add_into(&mut acc[i * c + start..i * c + start + w], &g[i * w..(i + 1) * w]);
                    }
                });
            }
            Op::MulCol(a, col) => {
                let (ta, tc) = (tape.value(*a), tape.value(*col));
                let c = ta.shape()[1];
                if want!(a) {
                    let (s, len) = slot!(a);
                    accumulate(s, len, |acc| {
                        for ((ar, gr), &k) in acc.chunks_mut(c).zip(g.chunks(c)).zip(tc.data()) {
                            for (o, &gi) in ar.iter_mut().zip(gr) {
                                *o = *o + gi * k;
                            }
                        }
                    });
                }
                if want!(col) {
                    let (s, len) = slot!(col);
                    accumulate(s, len, |acc| {
                        for ((o, gr), xr) in acc.iter_mut().zip(g.chunks(c)).zip(ta.data().chunks(c)) {
                            *o = *o + crate::tensor::dot(gr, xr);
                        }
                    });
                }
            }
            Op::Pick(a, idx) => {
                let c = tape.value(*a).shape()[1];
                let (s, len) = slot!(a);
                accumulate(s, len, |acc| {
                    for (i, &j) in idx.iter().enumerate() {
                        acc[i * c + j] = acc[i * c + j] + g[i];
                    }
                });
            }
            Op::Sum(a) => {
                let (s, len) = slot!(a);
                accumulate(s, len, |acc| {
                    for o in acc.iter_mut() {
                        *o = *o + g[0];
                    }
                });
            }
        }
        grads[idx] = Some(g);
    }

    let mut out = GradientSet::new();
    for (name, v) in &tape.params {
        let shape = tape.value(*v).shape().to_vec();
        let g = grads[v.0]
            .take()
            .unwrap_or_else(|| vec![T::zero(); tape.value(*v).numel()]);
        out.insert(name.clone(), Tensor::from_parts(shape, g));
    }
    Ok(out)
}

fn add_into<T: Scalar>(acc: &mut [T], g: &[T]) {
    for (a, &x) in acc.iter_mut().zip(g) {
        *a = *a + x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_loss_has_unit_gradient() {
        let mut t = Tape::<f64>::new();
        let th = t.param("theta", Tensor::vector(vec![0.3, -1.0, 2.0])).unwrap();
        let loss = t.sum(th).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get("theta").unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_and_tanh_gradients() {
        let mut t = Tape::<f64>::new();
        let th = t.param("theta", Tensor::scalar(3.0)).unwrap();
        let sq = t.mul(th, th).unwrap();
        let g = t.backward(sq).unwrap();
        assert_eq!(g.get("theta").unwrap().data(), &[6.0]);

        let mut t = Tape::<f64>::new();
        let th = t.param("theta", Tensor::scalar(0.0)).unwrap();
        let y = t.tanh(th).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get("theta").unwrap().data(), &[1.0]);
    }

    #[test]
    fn untouched_parameters_get_zero_gradient() {
        let mut t = Tape::<f64>::new();
        let a = t.param("a", Tensor::scalar(2.0)).unwrap();
        t.param("unused", Tensor::zeros(&[2, 2])).unwrap();
        let y = t.scale(a, 4.0).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get("a").unwrap().data(), &[4.0]);
        assert_eq!(g.get("unused").unwrap().data(), &[0.0; 4]);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::<f64>::new();
        let a = t.param("a", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(t.backward(a), Err(NumError::Contract(_))));
    }

    #[test]
    fn shared_use_accumulates_additively() {
        // y = a*a + a  => dy/da = 2a + 1
        let mut t = Tape::<f64>::new();
        let a = t.param("a", Tensor::scalar(1.5)).unwrap();
        let sq = t.mul(a, a).unwrap();
        let y = t.add(sq, a).unwrap();
        let g = t.backward(y).unwrap();
        assert_abs_diff_eq!(g.get("a").unwrap().data()[0], 4.0);
    }

    #[test]
    fn duplicate_parameter_names_rejected() {
        let mut t = Tape::<f64>::new();
        t.param("w", Tensor::scalar(1.0)).unwrap();
        assert!(t.param("w", Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn masked_softmax_needs_a_live_entry() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Tensor::zeros(&[1, 2]));
        assert!(t.masked_softmax_rows(a, vec![false, false]).is_err());
        let s = t.masked_softmax_rows(a, vec![true, false]).unwrap();
        assert_eq!(t.value(s).data(), &[1.0, 0.0]);
    }
}
