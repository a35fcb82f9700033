//! Reverse-mode tape over [`Tensor`] values.
//!
//! A [`Graph`] records one forward computation; `backward` walks the
//! tape in reverse and accumulates gradients. Nodes are created in
//! topological order by construction, so the reverse walk needs no
//! extra sorting. A graph is confined to one thread; independent
//! graphs may run in parallel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }
}

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// `[m,n] + [n]` broadcast down rows.
    AddRowBias(NodeId, NodeId),
    /// `[m,n] + [m,1]` broadcast across columns.
    AddColBroadcast(NodeId, NodeId),
    /// `[m,n] * [m,1]` broadcast across columns.
    MulColBroadcast(NodeId, NodeId),
    /// `[m,n] + [1]` added to every element.
    AddScalar(NodeId, NodeId),
    ConcatCols(NodeId, NodeId),
    SoftmaxRows(NodeId),
    Act(NodeId, Activation),
    Transpose(NodeId),
    GatherRows(NodeId, Vec<usize>),
    MeanRows(NodeId),
    RepeatRows(NodeId, usize),
    RepeatCols(NodeId, usize),
    SmoothL1 {
        pred: NodeId,
        target: Tensor,
        beta: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` target w.r.t. node `id`.
    pub fn grad(&self, id: NodeId) -> Tensor {
        let shape = self.nodes[id.0].value.shape().to_vec();
        Tensor::new(shape, self.grads[id.0].clone()).expect("gradient tensor")
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn dims2(t: &Tensor) -> (usize, usize) {
        (t.rows(), t.cols())
    }

    fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
        Error::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = Self::dims2(self.value(a));
        let (k2, n) = Self::dims2(self.value(b));
        if k != k2 {
            return Err(Self::dim_err("matmul", self.value(a), self.value(b)));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let lhs = av[i * k + p];
                if lhs == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += lhs * brow[j];
                }
            }
        }
        self.push(Tensor::raw(vec![m, n], out), Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Self::dim_err("add", self.value(a), self.value(b)));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::raw(shape, data), Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Self::dim_err("sub", self.value(a), self.value(b)));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::raw(shape, data), Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Self::dim_err("mul", self.value(a), self.value(b)));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::raw(shape, data), Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::Scale(a, c), "scale")
    }

    pub fn add_row_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = Self::dims2(self.value(a));
        if self.value(bias).numel() != n || self.value(bias).shape().len() != 1 {
            return Err(Self::dim_err("add_row_bias", self.value(a), self.value(bias)));
        }
        let bv = self.value(bias).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += bv[j];
            }
        }
        self.push(
            Tensor::raw(vec![m, n], data),
            Op::AddRowBias(a, bias),
            "add_row_bias",
        )
    }

    pub fn add_col_broadcast(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        let (m, n) = Self::dims2(self.value(a));
        let (cm, cn) = Self::dims2(self.value(col));
        if cm != m || cn != 1 {
            return Err(Self::dim_err(
                "add_col_broadcast",
                self.value(a),
                self.value(col),
            ));
        }
        let cv = self.value(col).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += cv[i];
            }
        }
        self.push(
            Tensor::raw(vec![m, n], data),
            Op::AddColBroadcast(a, col),
            "add_col_broadcast",
        )
    }

    pub fn mul_col_broadcast(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        let (m, n) = Self::dims2(self.value(a));
        let (cm, cn) = Self::dims2(self.value(col));
        if cm != m || cn != 1 {
            return Err(Self::dim_err(
                "mul_col_broadcast",
                self.value(a),
                self.value(col),
            ));
        }
        let cv = self.value(col).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] *= cv[i];
            }
        }
        self.push(
            Tensor::raw(vec![m, n], data),
            Op::MulColBroadcast(a, col),
            "mul_col_broadcast",
        )
    }

    pub fn add_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if self.value(s).numel() != 1 {
            return Err(Self::dim_err("add_scalar", self.value(a), self.value(s)));
        }
        let sv = self.value(s).data()[0];
        let out = self.value(a).map(|v| v + sv);
        self.push(out, Op::AddScalar(a, s), "add_scalar")
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, p) = Self::dims2(self.value(a));
        let (m2, q) = Self::dims2(self.value(b));
        if m != m2 {
            return Err(Self::dim_err("concat_cols", self.value(a), self.value(b)));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut data = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            data.extend_from_slice(&av[i * p..(i + 1) * p]);
            data.extend_from_slice(&bv[i * q..(i + 1) * q]);
        }
        self.push(
            Tensor::raw(vec![m, p + q], data),
            Op::ConcatCols(a, b),
            "concat_cols",
        )
    }

    /// Row-wise softmax, stabilized by subtracting each row's max.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (m, n) = Self::dims2(self.value(a));
        let av = self.value(a).data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut sum = 0.0;
            for j in 0..n {
                let e = (row[j] - max).exp();
                data[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                data[i * n + j] /= sum;
            }
        }
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::raw(shape, data), Op::SoftmaxRows(a), "softmax_rows")
    }

    pub fn activation(&mut self, a: NodeId, act: Activation) -> Result<NodeId> {
        let out = self.value(a).map(|v| act.apply(v));
        self.push(out, Op::Act(a, act), "activation")
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.activation(a, Activation::Relu)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).transposed();
        self.push(out, Op::Transpose(a), "transpose")
    }

    pub fn gather_rows(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let (r, d) = Self::dims2(self.value(table));
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(Error::Validation(format!(
                "gather_rows: index {bad} out of range for {r} rows"
            )));
        }
        let tv = self.value(table).data();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        self.push(
            Tensor::raw(vec![indices.len(), d], data),
            Op::GatherRows(table, indices.to_vec()),
            "gather_rows",
        )
    }

    /// `[k,d] -> [1,d]` column means.
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (k, d) = Self::dims2(self.value(a));
        let av = self.value(a).data();
        let mut data = vec![0.0; d];
        for i in 0..k {
            for j in 0..d {
                data[j] += av[i * d + j];
            }
        }
        for v in &mut data {
            *v /= k as f64;
        }
        self.push(Tensor::raw(vec![1, d], data), Op::MeanRows(a), "mean_rows")
    }

    /// `[1,d] -> [m,d]`.
    pub fn repeat_rows(&mut self, a: NodeId, m: usize) -> Result<NodeId> {
        let (r, d) = Self::dims2(self.value(a));
        if r != 1 {
            return Err(Error::Validation(format!(
                "repeat_rows wants a [1,d] input, got {:?}",
                self.value(a).shape()
            )));
        }
        let row = self.value(a).data().to_vec();
        let mut data = Vec::with_capacity(m * d);
        for _ in 0..m {
            data.extend_from_slice(&row);
        }
        self.push(
            Tensor::raw(vec![m, d], data),
            Op::RepeatRows(a, m),
            "repeat_rows",
        )
    }

    /// `[m,1] -> [m,n]`.
    pub fn repeat_cols(&mut self, a: NodeId, n: usize) -> Result<NodeId> {
        let (m, c) = Self::dims2(self.value(a));
        if c != 1 {
            return Err(Error::Validation(format!(
                "repeat_cols wants a [m,1] input, got {:?}",
                self.value(a).shape()
            )));
        }
        let av = self.value(a).data();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for _ in 0..n {
                data.push(av[i]);
            }
        }
        self.push(
            Tensor::raw(vec![m, n], data),
            Op::RepeatCols(a, n),
            "repeat_cols",
        )
    }

    /// Smooth L1 loss (mean reduction) against a constant target.
    pub fn smooth_l1(&mut self, pred: NodeId, target: &Tensor, beta: f64) -> Result<NodeId> {
        if self.value(pred).shape() != target.shape() {
            return Err(Self::dim_err("smooth_l1", self.value(pred), target));
        }
        if beta <= 0.0 {
            return Err(Error::Validation(format!(
                "smooth_l1 beta must be positive, got {beta}"
            )));
        }
        let n = target.numel() as f64;
        let mut total = 0.0;
        for (&p, &t) in self.value(pred).data().iter().zip(target.data()) {
            let d = p - t;
            total += if d.abs() < beta {
                0.5 * d * d / beta
            } else {
                d.abs() - 0.5 * beta
            };
        }
        self.push(
            Tensor::scalar(total / n),
            Op::SmoothL1 {
                pred,
                target: target.clone(),
                beta,
            },
            "smooth_l1",
        )
    }

    /// Backpropagate from a one-element node.
    pub fn backward(&mut self, from: NodeId) -> Result<()> {
        if self.value(from).numel() != 1 {
            return Err(Error::Validation(format!(
                "backward target must be scalar, got shape {:?}",
                self.value(from).shape()
            )));
        }
        self.grads = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.numel()])
            .collect();
        self.grads[from.0][0] = 1.0;

        for idx in (0..self.nodes.len()).rev() {
            let go = std::mem::take(&mut self.grads[idx]);
            if go.iter().all(|&g| g == 0.0) {
                self.grads[idx] = go;
                continue;
            }
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = Self::dims2(&self.nodes[a.0].value);
                    let n = self.nodes[b.0].value.cols();
                    let av: Vec<f64> = self.nodes[a.0].value.data().to_vec();
                    let bv: Vec<f64> = self.nodes[b.0].value.data().to_vec();
                    {
                        let ga = &mut self.grads[a.0];
                        for i in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += go[i * n + j] * bv[p * n + j];
                                }
                                ga[i * k + p] += s;
                            }
                        }
                    }
                    {
                        let gb = &mut self.grads[b.0];
                        for p in 0..k {
                            for j in 0..n {
                                let mut s = 0.0;
                                for i in 0..m {
                                    s += av[i * k + p] * go[i * n + j];
                                }
                                gb[p * n + j] += s;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    for (g, &v) in self.grads[a.0].iter_mut().zip(&go) {
                        *g += v;
                    }
                    for (g, &v) in self.grads[b.0].iter_mut().zip(&go) {
                        *g += v;
                    }
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    for (g, &v) in self.grads[a.0].iter_mut().zip(&go) {
                        *g += v;
                    }
                    for (g, &v) in self.grads[b.0].iter_mut().zip(&go) {
                        *g -= v;
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let av: Vec<f64> = self.nodes[a.0].value.data().to_vec();
                    let bv: Vec<f64> = self.nodes[b.0].value.data().to_vec();
                    for (i, &v) in go.iter().enumerate() {
                        self.grads[a.0][i] += v * bv[i];
                        self.grads[b.0][i] += v * av[i];
                    }
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    for (g, &v) in self.grads[a.0].iter_mut().zip(&go) {
                        *g += c * v;
                    }
                }
                Op::AddRowBias(a, bias) => {
                    let (a, bias) = (*a, *bias);
                    let n = self.nodes[bias.0].value.numel();
                    let m = self.nodes[a.0].value.rows();
                    for (g, &v) in self.grads[a.0].iter_mut().zip(&go) {
                        *g += v;
                    }
                    for i in 0..m {
                        for j in 0..n {
                            self.grads[bias.0][j] += go[i * n + j];
                        }
                    }
                }
                Op::AddColBroadcast(a, col) => {
                    let (a, col) = (*a, *col);
                    let (m, n) = Self::dims2(&self.nodes[a.0].value);
                    for (g, &v) in self.grads[a.0].iter_mut().zip(&go) {
                        *g += v;
                    }
                    for i in 0..m {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += go[i * n + j];
                        }
                        self.grads[col.0][i] += s;
                    }
                }
                Op::MulColBroadcast(a, col) => {
                    let (a, col) = (*a, *col);
                    let (m, n) = Self::dims2(&self.nodes[a.0].value);
                    let av: Vec<f64> = self.nodes[a.0].value.data().to_vec();
                    let cv: Vec<f64> = self.nodes[col.0].value.data().to_vec();
                    for i in 0..m {
                        let mut s = 0.0;
                        for j in 0..n {
                            self.grads[a.0][i * n + j] += go[i * n + j] * cv[i];
                            s += go[i * n + j] * av[i * n + j];
                        }
                        self.grads[col.0][i] += s;
                    }
                }
                Op::AddScalar(a, s) => {
                    let (a, s) = (*a, *s);
                    for (g, &v) in self.grads[a.0].iter_mut().zip(&go) {
                        *g += v;
                    }
                    self.grads[s.0][0] += go.iter().sum::<f64>();
                }
                Op::ConcatCols(a, b) => {
                    let (a, b) = (*a, *b);
                    let (m, p) = Self::dims2(&self.nodes[a.0].value);
                    let q = self.nodes[b.0].value.cols();
                    for i in 0..m {
                        for j in 0..p {
                            self.grads[a.0][i * p + j] += go[i * (p + q) + j];
                        }
                        for j in 0..q {
                            self.grads[b.0][i * q + j] += go[i * (p + q) + p + j];
                        }
                    }
                }
                Op::SoftmaxRows(a) => {
                    let a = *a;
                    let (m, n) = Self::dims2(&self.nodes[idx].value);
                    let sv: Vec<f64> = self.nodes[idx].value.data().to_vec();
                    for i in 0..m {
                        let mut dot = 0.0;
                        for j in 0..n {
                            dot += go[i * n + j] * sv[i * n + j];
                        }
                        for j in 0..n {
                            self.grads[a.0][i * n + j] +=
                                sv[i * n + j] * (go[i * n + j] - dot);
                        }
                    }
                }
                Op::Act(a, act) => {
                    let (a, act) = (*a, *act);
                    let xv: Vec<f64> = self.nodes[a.0].value.data().to_vec();
                    let yv: Vec<f64> = self.nodes[idx].value.data().to_vec();
                    for (i, &v) in go.iter().enumerate() {
                        let d = match act {
                            Activation::Relu => {
                                if xv[i] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Activation::Sigmoid => yv[i] * (1.0 - yv[i]),
                            Activation::Tanh => 1.0 - yv[i] * yv[i],
                        };
                        self.grads[a.0][i] += v * d;
                    }
                }
                Op::Transpose(a) => {
                    let a = *a;
                    let (m, n) = Self::dims2(&self.nodes[idx].value);
                    for i in 0..m {
                        for j in 0..n {
                            self.grads[a.0][j * m + i] += go[i * n + j];
                        }
                    }
                }
                Op::GatherRows(table, indices) => {
                    let table = *table;
                    let indices = indices.clone();
                    let d = self.nodes[table.0].value.cols();
                    for (k, &row) in indices.iter().enumerate() {
                        for j in 0..d {
                            self.grads[table.0][row * d + j] += go[k * d + j];
                        }
                    }
                }
                Op::MeanRows(a) => {
                    let a = *a;
                    let (k, d) = Self::dims2(&self.nodes[a.0].value);
                    let inv = 1.0 / k as f64;
                    for i in 0..k {
                        for j in 0..d {
                            self.grads[a.0][i * d + j] += go[j] * inv;
                        }
                    }
                }
                Op::RepeatRows(a, m) => {
                    let (a, m) = (*a, *m);
                    let d = self.nodes[a.0].value.cols();
                    for i in 0..m {
                        for j in 0..d {
                            self.grads[a.0][j] += go[i * d + j];
                        }
                    }
                }
                Op::RepeatCols(a, n) => {
                    let (a, n) = (*a, *n);
                    let m = self.nodes[a.0].value.rows();
                    for i in 0..m {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += go[i * n + j];
                        }
                        self.grads[a.0][i] += s;
                    }
                }
                Op::SmoothL1 { pred, target, beta } => {
                    let pred = *pred;
                    let beta = *beta;
                    let tv: Vec<f64> = target.data().to_vec();
                    let pv: Vec<f64> = self.nodes[pred.0].value.data().to_vec();
                    let scale = go[0] / tv.len() as f64;
                    for i in 0..tv.len() {
                        let d = pv[i] - tv[i];
                        let dd = if d.abs() < beta {
                            d / beta
                        } else {
                            d.signum()
                        };
                        self.grads[pred.0][i] += scale * dd;
                    }
                }
            }
            self.grads[idx] = go;
        }
        Ok(())
    }
}
