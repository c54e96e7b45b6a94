//! Reverse-mode differentiation over a per-sequence operation tape.
//!
//! Every forward pass records into its own [`Tape`]; parameters are read
//! from a shared, immutable [`ParamStore`], so independent tapes can run
//! on different threads. [`Tape::backward`] returns dense gradients for
//! every parameter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Named parameter matrices in registration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "parameter `{name}` registered twice"
        );
        self.names.push(name);
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: usize) -> &Matrix {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Matrix {
        &mut self.values[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.data.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn to_named(&self) -> BTreeMap<String, Matrix> {
        self.iter()
            .map(|(n, m)| (n.to_string(), m.clone()))
            .collect()
    }

    /// Overwrite values from a named map; every registered name must be
    /// present with a matching shape.
    pub fn load_named(&mut self, named: &BTreeMap<String, Matrix>) -> Result<()> {
        for (name, value) in self.names.iter().zip(self.values.iter_mut()) {
            let src = named
                .get(name)
                .ok_or_else(|| Error::validation("params", format!("missing `{name}`")))?;
            if src.shape() != value.shape() || src.data.len() != value.data.len() {
                return Err(Error::validation(
                    "params",
                    format!(
                        "`{name}` has shape {:?}, expected {:?}",
                        src.shape(),
                        value.shape()
                    ),
                ));
            }
            *value = src.clone();
        }
        if named.len() != self.names.len() {
            return Err(Error::validation("params", "unexpected extra parameters"));
        }
        Ok(())
    }
}

/// Dense gradients, one matrix per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub values: Vec<Matrix>,
}

impl Grads {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            values: params
                .values
                .iter()
                .map(|m| Matrix::zeros(m.rows, m.cols))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.values {
            m.scale_assign(s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(Matrix::sum_sq).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Matrix::is_finite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Gelu(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    SliceRows {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    Pick {
        x: NodeId,
        at: Vec<(usize, usize)>,
    },
}

struct Node {
    op: Op,
    value: Option<Matrix>,
}

const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (Op::Param(pid), _) => self.params.value(*pid),
            (_, Some(v)) => v,
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn param(&mut self, pid: usize) -> NodeId {
        if let Some(id) = self.param_nodes[pid] {
            return id;
        }
        self.nodes.push(Node {
            op: Op::Param(pid),
            value: None,
        });
        let id = NodeId(self.nodes.len() - 1);
        self.param_nodes[pid] = Some(id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_bt(self.value(b));
        self.push(Op::MatMulBt(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(Op::Add(a, b), v)
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let r = self.value(row);
        assert_eq!(r.rows, 1, "add_row expects a row vector");
        let mut v = self.value(a).clone();
        assert_eq!(v.cols, r.cols, "add_row width mismatch");
        for i in 0..v.rows {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *x += b;
            }
        }
        self.push(Op::AddRow(a, row), v)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self
            .value(a)
            .map(|x| 0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh()));
        self.push(Op::Gelu(a), v)
    }

    /// Row-wise softmax. With `causal`, column `c` of row `r` is masked
    /// out when `c > r`.
    pub fn softmax_rows(&mut self, a: NodeId, causal: bool) -> NodeId {
        let x = self.value(a);
        let mut v = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let width = if causal { (r + 1).min(x.cols) } else { x.cols };
            let row = &x.row(r)[..width];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = &mut v.row_mut(r)[..width];
            let mut sum = 0.0;
            for (o, &z) in out.iter_mut().zip(row) {
                *o = (z - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        self.push(Op::Softmax(a), v)
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut v = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let row = x.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            for (o, &z) in v.row_mut(r).iter_mut().zip(row) {
                *o = z - lse;
            }
        }
        self.push(Op::LogSoftmax(a), v)
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let g = self.value(gain);
        let b = self.value(bias);
        let n = xv.cols as f64;
        let mut xhat = Matrix::zeros(xv.rows, xv.cols);
        let mut inv_std = Vec::with_capacity(xv.rows);
        let mut out = Matrix::zeros(xv.rows, xv.cols);
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            for (c, &x) in row.iter().enumerate() {
                let h = (x - mean) * inv;
                *xhat.at_mut(r, c) = h;
                *out.at_mut(r, c) = h * g.data[c] + b.data[c];
            }
        }
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            out,
        )
    }

    /// Row lookup: output row `r` is `table[ids[r]]`.
    pub fn gather_rows(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let mut v = Matrix::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            v.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            v,
        )
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        let mut v = Matrix::zeros(xv.rows, len);
        for r in 0..xv.rows {
            v.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols { x, start }, v)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        let v = Matrix::from_vec(
            len,
            xv.cols,
            xv.data[start * xv.cols..(start + len) * xv.cols].to_vec(),
        );
        self.push(Op::SliceRows { x, start }, v)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let pv = self.value(p);
                assert_eq!(pv.rows, rows, "concat_cols row mismatch");
                v.row_mut(r)[offset..offset + pv.cols].copy_from_slice(pv.row(r));
                offset += pv.cols;
            }
        }
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    /// Column vector of selected entries `x[r][c]`.
    pub fn pick(&mut self, x: NodeId, at: &[(usize, usize)]) -> NodeId {
        let xv = self.value(x);
        let data = at.iter().map(|&(r, c)| xv.at(r, c)).collect();
        let v = Matrix::from_vec(at.len(), 1, data);
        self.push(Op::Pick { x, at: at.to_vec() }, v)
    }

    /// Backpropagate from the seeded output gradients.
    pub fn backward(&self, seeds: &[(NodeId, Matrix)]) -> Grads {
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        for (id, g) in seeds {
            accumulate(&mut grads, *id, g.clone());
        }
        let mut out = Grads::zeros_like(self.params);
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = node.value.as_ref();
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => out.values[*pid].add_assign(&g),
                Op::MatMul(a, b) => {
                    let da = g.matmul_bt(self.value(*b));
                    let db = self.value(*a).matmul_at(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulBt(a, b) => {
                    let da = g.matmul(self.value(*b));
                    let db = g.matmul_at(self.value(*a));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRow(a, row) => {
                    let mut dr = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (d, x) in dr.data.iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *row, dr);
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.map(|x| x * s)),
                Op::Tanh(a) => {
                    let y = y.expect("tanh value");
                    let mut d = g;
                    for (dx, yv) in d.data.iter_mut().zip(&y.data) {
                        *dx *= 1.0 - yv * yv;
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut d = g;
                    for (dx, &xv) in d.data.iter_mut().zip(&x.data) {
                        let t = (GELU_K * (xv + GELU_C * xv * xv * xv)).tanh();
                        let deriv = 0.5 * (1.0 + t)
                            + 0.5 * xv * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * xv * xv);
                        *dx *= deriv;
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::Softmax(a) => {
                    let y = y.expect("softmax value");
                    let mut d = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for (c, o) in d.row_mut(r).iter_mut().enumerate() {
                            *o = yr[c] * (gr[c] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::LogSoftmax(a) => {
                    let y = y.expect("log-softmax value");
                    let mut d = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let gr = g.row(r);
                        let total: f64 = gr.iter().sum();
                        for (c, o) in d.row_mut(r).iter_mut().enumerate() {
                            *o = gr[c] - y.at(r, c).exp() * total;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gain);
                    let n = g.cols as f64;
                    let mut dx = Matrix::zeros(g.rows, g.cols);
                    let mut dg = Matrix::zeros(1, g.cols);
                    let mut db = Matrix::zeros(1, g.cols);
                    for (r, &inv) in inv_std.iter().enumerate() {
                        let gr = g.row(r);
                        let hr = xhat.row(r);
                        let dh: Vec<f64> = gr.iter().zip(&gv.data).map(|(a, b)| a * b).collect();
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h: f64 = dh.iter().zip(hr).map(|(a, b)| a * b).sum();
                        for c in 0..g.cols {
                            dg.data[c] += gr[c] * hr[c];
                            db.data[c] += gr[c];
                            *dx.at_mut(r, c) = inv / n * (n * dh[c] - sum_dh - hr[c] * sum_dh_h);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gain, dg);
                    accumulate(&mut grads, *bias, db);
                }
                Op::Gather { table, ids } => {
                    let t = self.value(*table);
                    let mut d = Matrix::zeros(t.rows, t.cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, x) in d.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *table, d);
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let mut d = Matrix::zeros(xv.rows, xv.cols);
                    for r in 0..g.rows {
                        d.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, d);
                }
                Op::SliceRows { x, start } => {
                    let xv = self.value(*x);
                    let mut d = Matrix::zeros(xv.rows, xv.cols);
                    d.data[start * xv.cols..(start + g.rows) * xv.cols].copy_from_slice(&g.data);
                    accumulate(&mut grads, *x, d);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = self.value(p).cols;
                        let mut d = Matrix::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            d.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        accumulate(&mut grads, p, d);
                    }
                }
                Op::Pick { x, at } => {
                    let xv = self.value(*x);
                    let mut d = Matrix::zeros(xv.rows, xv.cols);
                    for (k, &(r, c)) in at.iter().enumerate() {
                        *d.at_mut(r, c) += g.data[k];
                    }
                    accumulate(&mut grads, *x, d);
                }
            }
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
