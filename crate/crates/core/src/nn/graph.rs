//! Tape-based reverse-mode automatic differentiation over f64 matrices.
//!
//! Operations are recorded in construction order, which is already a
//! topological order, so the backward pass is a single reverse sweep. The
//! set of primitives is exactly what the encoder and the training losses
//! need; each primitive implements its own vector-Jacobian product.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    /// matrix (n x d) + row (1 x d), broadcast over rows
    AddRow(NodeId, NodeId),
    Relu(NodeId),
    Ln(NodeId),
    Exp(NodeId),
    Transpose(NodeId),
    SoftmaxRows(NodeId),
    /// softmax over all entries; output is 1 x (rows*cols)
    SoftmaxFlat(NodeId),
    LayerNormRows {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
    /// n x d -> 1 x d column means
    MeanRows(NodeId),
    /// n x d -> 1 x (n*d), scaled to unit Euclidean norm
    L2NormalizeFlat(NodeId),
    SliceCols {
        x: NodeId,
        start: usize,
        len: usize,
    },
    ConcatCols(Vec<NodeId>),
    GatherRows {
        x: NodeId,
        rows: Vec<usize>,
    },
    /// -> 1 x 1 sum of all entries
    SumAll(NodeId),
    /// elementwise sum of same-shaped nodes
    SumMany(Vec<NodeId>),
    /// stable log(sum(exp(s_i))) over 1 x 1 scalars -> 1 x 1
    LogSumExpMany(Vec<NodeId>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// A dynamically built computation graph.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[(0, 0)]
    }

    /// Insert an input or parameter node.
    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.mapv(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.mapv(|x| x + c);
        self.push(v, Op::AddConst(a))
    }

    pub fn add_row(&mut self, m: NodeId, row: NodeId) -> NodeId {
        let v = &self.nodes[m.0].value + &self.nodes[row.0].value;
        self.push(v, Op::AddRow(m, row))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a.0].value;
        let mut v = x.clone();
        for mut row in v.axis_iter_mut(Axis(0)) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|e| (e - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|e| e / sum);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn softmax_flat(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a.0].value;
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut flat: Vec<f64> = x.iter().map(|&e| (e - max).exp()).collect();
        let sum: f64 = flat.iter().sum();
        for e in &mut flat {
            *e /= sum;
        }
        let n = flat.len();
        let v = Array2::from_shape_vec((1, n), flat).expect("shape");
        self.push(v, Op::SoftmaxFlat(a))
    }

    /// Per-row layer norm with learnable 1 x d gain and bias.
    pub fn layer_norm_rows(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let g = &self.nodes[gain.0].value;
        let b = &self.nodes[bias.0].value;
        let d = xv.ncols() as f64;
        let mut v = xv.clone();
        for mut row in v.axis_iter_mut(Axis(0)) {
            let mean = row.sum() / d;
            let var = row.iter().map(|&e| (e - mean) * (e - mean)).sum::<f64>() / d;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for (j, e) in row.iter_mut().enumerate() {
                *e = (*e - mean) * inv * g[(0, j)] + b[(0, j)];
            }
        }
        self.push(v, Op::LayerNormRows { x, gain, bias })
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a.0].value;
        let n = x.nrows() as f64;
        let v = x.sum_axis(Axis(0)).insert_axis(Axis(0)) / n;
        self.push(v, Op::MeanRows(a))
    }

    pub fn l2_normalize_flat(&mut self, a: NodeId) -> Result<NodeId> {
        let x = &self.nodes[a.0].value;
        let norm = x.iter().map(|&e| e * e).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::NonFiniteActivation {
                layer: "l2 normalization of a zero embedding".into(),
            });
        }
        let flat: Vec<f64> = x.iter().map(|&e| e / norm).collect();
        let n = flat.len();
        let v = Array2::from_shape_vec((1, n), flat).expect("shape");
        Ok(self.push(v, Op::L2NormalizeFlat(a)))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.nodes[x.0]
            .value
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        self.push(v, Op::SliceCols { x, start, len })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat shapes");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, x: NodeId, rows: &[usize]) -> NodeId {
        let src = &self.nodes[x.0].value;
        let mut v = Array2::zeros((rows.len(), src.ncols()));
        for (i, &r) in rows.iter().enumerate() {
            v.row_mut(i).assign(&src.row(r));
        }
        self.push(
            v,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
        )
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a.0].value.sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a))
    }

    pub fn sum_many(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = self.nodes[parts[0].0].value.clone();
        for p in &parts[1..] {
            v += &self.nodes[p.0].value;
        }
        self.push(v, Op::SumMany(parts.to_vec()))
    }

    /// Stable log-sum-exp over 1 x 1 scalar nodes (row maximum subtracted
    /// before exponentiation).
    pub fn log_sum_exp_many(&mut self, parts: &[NodeId]) -> NodeId {
        let vals: Vec<f64> = parts.iter().map(|p| self.nodes[p.0].value[(0, 0)]).collect();
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = vals.iter().map(|&v| (v - max).exp()).sum();
        let out = max + sum.ln();
        self.push(
            Array2::from_elem((1, 1), out),
            Op::LogSumExpMany(parts.to_vec()),
        )
    }

    /// Reverse sweep from a scalar output; returns one gradient slot per node.
    pub fn backward(&self, of: NodeId) -> Vec<Array2<f64>> {
        assert_eq!(
            self.nodes[of.0].value.dim(),
            (1, 1),
            "backward target must be scalar"
        );
        let mut grads: Vec<Array2<f64>> = self
            .nodes
            .iter()
            .map(|n| Array2::zeros(n.value.dim()))
            .collect();
        grads[of.0][(0, 0)] = 1.0;

        for i in (0..=of.0).rev() {
            let g = grads[i].clone();
            if g.iter().all(|&e| e == 0.0) {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    grads[a.0] += &g.dot(&bv.t());
                    grads[b.0] += &av.t().dot(&g);
                }
                Op::Add(a, b) => {
                    grads[a.0] += &g;
                    grads[b.0] += &g;
                }
                Op::Sub(a, b) => {
                    grads[a.0] += &g;
                    grads[b.0] -= &g;
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    grads[a.0] += &(&g * &bv);
                    grads[b.0] += &(&g * &av);
                }
                Op::Scale(a, c) => {
                    grads[a.0] += &g.mapv(|e| e * c);
                }
                Op::AddConst(a) => {
                    grads[a.0] += &g;
                }
                Op::AddRow(m, row) => {
                    grads[m.0] += &g;
                    let col_sum = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    grads[row.0] += &col_sum;
                }
                Op::Relu(a) => {
                    let mask = self.nodes[a.0].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    grads[a.0] += &(&g * &mask);
                }
                Op::Ln(a) => {
                    let inv = self.nodes[a.0].value.mapv(|x| 1.0 / x);
                    grads[a.0] += &(&g * &inv);
                }
                Op::Exp(a) => {
                    grads[a.0] += &(&g * &self.nodes[i].value);
                }
                Op::Transpose(a) => {
                    grads[a.0] += &g.t();
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let mut gx = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let dot: f64 = (0..y.ncols()).map(|c| g[(r, c)] * y[(r, c)]).sum();
                        for c in 0..y.ncols() {
                            gx[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                        }
                    }
                    grads[a.0] += &gx;
                }
                Op::SoftmaxFlat(a) => {
                    let y = &self.nodes[i].value;
                    let dot: f64 = g.iter().zip(y.iter()).map(|(gi, yi)| gi * yi).sum();
                    let (rows, cols) = self.nodes[a.0].value.dim();
                    let flat: Vec<f64> = g
                        .iter()
                        .zip(y.iter())
                        .map(|(gi, yi)| yi * (gi - dot))
                        .collect();
                    let gx = Array2::from_shape_vec((rows, cols), flat).expect("shape");
                    grads[a.0] += &gx;
                }
                Op::LayerNormRows { x, gain, bias } => {
                    let xv = &self.nodes[x.0].value;
                    let gv = &self.nodes[gain.0].value;
                    let d = xv.ncols() as f64;
                    let mut gx = Array2::zeros(xv.dim());
                    let mut ggain = Array2::zeros((1, xv.ncols()));
                    let mut gbias = Array2::zeros((1, xv.ncols()));
                    for r in 0..xv.nrows() {
                        let row = xv.row(r);
                        let mean = row.sum() / d;
                        let var = row.iter().map(|&e| (e - mean) * (e - mean)).sum::<f64>() / d;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|&e| (e - mean) * inv).collect();
                        let dxhat: Vec<f64> =
                            (0..xv.ncols()).map(|c| g[(r, c)] * gv[(0, c)]).collect();
                        let mean_dxhat: f64 = dxhat.iter().sum::<f64>() / d;
                        let mean_dxhat_xhat: f64 =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d;
                        for c in 0..xv.ncols() {
                            gx[(r, c)] =
                                inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                            ggain[(0, c)] += g[(r, c)] * xhat[c];
                            gbias[(0, c)] += g[(r, c)];
                        }
                    }
                    grads[x.0] += &gx;
                    grads[gain.0] += &ggain;
                    grads[bias.0] += &gbias;
                }
                Op::MeanRows(a) => {
                    let n = self.nodes[a.0].value.nrows();
                    let share = g.mapv(|e| e / n as f64);
                    let mut gx = Array2::zeros(self.nodes[a.0].value.dim());
                    for mut row in gx.axis_iter_mut(Axis(0)) {
                        row += &share.row(0);
                    }
                    grads[a.0] += &gx;
                }
                Op::L2NormalizeFlat(a) => {
                    let y = &self.nodes[i].value;
                    let xv = &self.nodes[a.0].value;
                    let norm = xv.iter().map(|&e| e * e).sum::<f64>().sqrt();
                    let dot: f64 = g.iter().zip(y.iter()).map(|(gi, yi)| gi * yi).sum();
                    let (rows, cols) = xv.dim();
                    let flat: Vec<f64> = g
                        .iter()
                        .zip(y.iter())
                        .map(|(gi, yi)| (gi - yi * dot) / norm)
                        .collect();
                    let gx = Array2::from_shape_vec((rows, cols), flat).expect("shape");
                    grads[a.0] += &gx;
                }
                Op::SliceCols { x, start, len } => {
                    let mut gx = Array2::zeros(self.nodes[x.0].value.dim());
                    gx.slice_mut(ndarray::s![.., *start..*start + *len])
                        .assign(&g);
                    grads[x.0] += &gx;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.ncols();
                        let part_g = g.slice(ndarray::s![.., offset..offset + w]).to_owned();
                        grads[p.0] += &part_g;
                        offset += w;
                    }
                }
                Op::GatherRows { x, rows } => {
                    let mut gx = Array2::zeros(self.nodes[x.0].value.dim());
                    for (ri, &r) in rows.iter().enumerate() {
                        let mut dst = gx.row_mut(r);
                        dst += &g.row(ri);
                    }
                    grads[x.0] += &gx;
                }
                Op::SumAll(a) => {
                    let s = g[(0, 0)];
                    grads[a.0] += &Array2::from_elem(self.nodes[a.0].value.dim(), s);
                }
                Op::SumMany(parts) => {
                    for p in parts {
                        grads[p.0] += &g;
                    }
                }
                Op::LogSumExpMany(parts) => {
                    let s = g[(0, 0)];
                    let vals: Vec<f64> =
                        parts.iter().map(|p| self.nodes[p.0].value[(0, 0)]).collect();
                    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let total: f64 = vals.iter().map(|&v| (v - max).exp()).sum();
                    for (p, &v) in parts.iter().zip(&vals) {
                        grads[p.0][(0, 0)] += s * (v - max).exp() / total;
                    }
                }
            }
        }
        grads
    }
}
