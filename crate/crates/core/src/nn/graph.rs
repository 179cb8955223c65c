//! Reverse-mode autodiff tape.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::fmath;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// One cross-entropy term: row of the logits, target class, weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CeTarget {
    pub row: usize,
    pub class: usize,
    pub weight: f64,
}

const LN_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    LogSigmoid(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    Softmax(Var),
    LayerNorm { x: Var, xhat: Tensor, inv_std: Vec<f64> },
    Sum(Var),
    CrossEntropy { logits: Var, probs: Tensor, targets: Vec<CeTarget> },
    Gather { table: Var, ids: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// A computation recorded against a parameter store.
pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

/// Gradients for every node of one backward pass.
pub struct Backward {
    node_grads: Vec<Option<Tensor>>,
    params: Gradients,
}

impl Backward {
    /// Gradient with respect to any node (for example an input leaf).
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.node_grads[v.0].as_ref()
    }

    pub fn params(&self) -> &Gradients {
        &self.params
    }

    pub fn into_params(self) -> Gradients {
        self.params
    }
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Graph { store, nodes: Vec::new(), param_nodes: vec![None; store.len()] }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
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

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// A constant or input.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let v = self.push(self.store.get(id).clone(), Op::Param(id));
        self.param_nodes[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).matmul(self.value(b)).expect("matmul shapes");
        self.push(t, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).matmul_bt(self.value(b)).expect("matmul_bt shapes");
        self.push(t, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(t, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(t, Op::Mul(a, b))
    }

    /// Adds the `1 x c` tensor `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let t = broadcast_rows(self.value(a), self.value(row), |x, y| x + y);
        self.push(t, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by `row`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let t = broadcast_rows(self.value(a), self.value(row), |x, y| x * y);
        self.push(t, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let t = self.value(a).scale(k);
        self.push(t, Op::Scale(a, k))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        let t = self.value(a).map(|x| x + k);
        self.push(t, Op::AddConst(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(fmath::sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(fmath::tanh);
        self.push(t, Op::Tanh(a))
    }

    /// Exact (erf) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * phi_cdf(x));
        self.push(t, Op::Gelu(a))
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(fmath::log_sigmoid);
        self.push(t, Op::LogSigmoid(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        assert!(start + len <= src.cols(), "slice_cols out of range");
        let t = Tensor::from_fn(src.rows(), len, |r, c| src[(r, start + c)]);
        self.push(t, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0])[0];
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut t = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                t.row_slice_mut(r)[off..off + v.cols()].copy_from_slice(v.row_slice(r));
            }
            off += v.cols();
        }
        self.push(t, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        assert!(start + len <= src.rows(), "slice_rows out of range");
        let c = src.cols();
        let t = Tensor::new(len, c, src.data()[start * c..(start + len) * c].to_vec()).unwrap();
        self.push(t, Op::SliceRows(a, start))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Var {
        self.slice_rows(a, r, 1)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.shape(parts[0])[1];
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        self.push(Tensor::new(rows, cols, data).unwrap(), Op::ConcatRows(parts.to_vec()))
    }

    /// Row-wise softmax; columns with `mask[c] == false` get probability 0.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let t = self.value(a).softmax_rows_masked(mask);
        self.push(t, Op::Softmax(a))
    }

    /// Row-wise normalization to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let n = v.cols() as f64;
        let mut xhat = v.clone();
        let mut inv_std = Vec::with_capacity(v.rows());
        for r in 0..v.rows() {
            let row = xhat.row_slice_mut(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let is = 1.0 / fmath::sqrt(var + LN_EPS);
            row.iter_mut().for_each(|x| *x = (*x - mean) * is);
            inv_std.push(is);
        }
        self.push(xhat.clone(), Op::LayerNorm { x, xhat, inv_std })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        self.push(t, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// `Σ weight · −log softmax(logits[row])[class]` over `targets`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[CeTarget]) -> Var {
        let l = self.value(logits);
        let probs = l.softmax_rows();
        let mut loss = 0.0;
        for t in targets {
            loss -= t.weight * super::tensor::log_softmax_at(l.row_slice(t.row), t.class);
        }
        self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, probs, targets: targets.to_vec() })
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let c = t.cols();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            data.extend_from_slice(t.row_slice(i));
        }
        self.push(Tensor::new(ids.len(), c, data).unwrap(), Op::Gather { table, ids: ids.to_vec() })
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Backward {
        assert_eq!(self.shape(loss), [1, 1], "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut params = Gradients::new(self.store.len());
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(x) => x.add_assign(&t),
                slot => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => params.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul_bt(self.value(*b)).unwrap());
                    acc(*b, self.value(*a).matmul_at(&g).unwrap());
                }
                Op::MatMulBt(a, b) => {
                    acc(*a, g.matmul(self.value(*b)).unwrap());
                    acc(*b, g.matmul_at(self.value(*a)).unwrap());
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                    acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
                }
                Op::AddRow(a, row) => {
                    acc(*row, column_sums(&g));
                    acc(*a, g.clone());
                }
                Op::MulRow(a, row) => {
                    let rv = self.value(*row);
                    let av = self.value(*a);
                    acc(*row, column_sums(&g.zip_map(av, |x, y| x * y)));
                    acc(*a, broadcast_rows(&g, rv, |x, y| x * y));
                }
                Op::Scale(a, k) => acc(*a, g.scale(*k)),
                Op::AddConst(a) => acc(*a, g.clone()),
                Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |d, s| d * s * (1.0 - s))),
                Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |d, t| d * (1.0 - t * t))),
                Op::Gelu(a) => acc(*a, g.zip_map(self.value(*a), |d, x| d * (phi_cdf(x) + x * phi_pdf(x)))),
                Op::LogSigmoid(a) => acc(*a, g.zip_map(self.value(*a), |d, x| d * fmath::sigmoid(-x))),
                Op::SliceCols(a, start) => {
                    let [r, c] = self.shape(*a);
                    let mut t = Tensor::zeros(r, c);
                    for i in 0..r {
                        t.row_slice_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row_slice(i));
                    }
                    acc(*a, t);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.shape(p)[1];
                        acc(p, Tensor::from_fn(g.rows(), w, |r, c| g[(r, off + c)]));
                        off += w;
                    }
                }
                Op::SliceRows(a, start) => {
                    let [r, c] = self.shape(*a);
                    let mut t = Tensor::zeros(r, c);
                    t.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                    acc(*a, t);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    let c = g.cols();
                    for &p in parts {
                        let h = self.shape(p)[0];
                        acc(p, Tensor::new(h, c, g.data()[off * c..(off + h) * c].to_vec()).unwrap());
                        off += h;
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut t = g.clone();
                    for r in 0..y.rows() {
                        let yr = y.row_slice(r);
                        let dot: f64 = g.row_slice(r).iter().zip(yr).map(|(d, y)| d * y).sum();
                        for (x, &yv) in t.row_slice_mut(r).iter_mut().zip(yr) {
                            *x = yv * (*x - dot);
                        }
                    }
                    acc(*a, t);
                }
                Op::LayerNorm { x, xhat, inv_std } => {
                    let n = xhat.cols() as f64;
                    let mut t = g.clone();
                    for r in 0..xhat.rows() {
                        let gr = g.row_slice(r);
                        let xr = xhat.row_slice(r);
                        let sg: f64 = gr.iter().sum();
                        let sgx: f64 = gr.iter().zip(xr).map(|(a, b)| a * b).sum();
                        let is = inv_std[r];
                        for ((o, &gv), &xv) in t.row_slice_mut(r).iter_mut().zip(gr).zip(xr) {
                            *o = is / n * (n * gv - sg - xv * sgx);
                        }
                    }
                    acc(*x, t);
                }
                Op::Sum(a) => {
                    let [r, c] = self.shape(*a);
                    acc(*a, Tensor::full(r, c, g.item()));
                }
                Op::CrossEntropy { logits, probs, targets } => {
                    let up = g.item();
                    let mut t = Tensor::zeros(probs.rows(), probs.cols());
                    for tg in targets {
                        let k = up * tg.weight;
                        for (o, &p) in t.row_slice_mut(tg.row).iter_mut().zip(probs.row_slice(tg.row)) {
                            *o += k * p;
                        }
                        t[(tg.row, tg.class)] -= k;
                    }
                    acc(*logits, t);
                }
                Op::Gather { table, ids } => {
                    let [r, c] = self.shape(*table);
                    let mut t = Tensor::zeros(r, c);
                    for (k, &i) in ids.iter().enumerate() {
                        for (o, &v) in t.row_slice_mut(i).iter_mut().zip(g.row_slice(k)) {
                            *o += v;
                        }
                    }
                    acc(*table, t);
                }
            }
            grads[i] = Some(g);
        }
        Backward { node_grads: grads, params }
    }
}

fn broadcast_rows(a: &Tensor, row: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(row.rows(), 1, "broadcast operand must be a row");
    assert_eq!(a.cols(), row.cols(), "broadcast column mismatch");
    Tensor::from_fn(a.rows(), a.cols(), |r, c| f(a[(r, c)], row[(0, c)]))
}

fn column_sums(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, t.cols());
    for r in 0..t.rows() {
        for (o, &v) in out.row_slice_mut(0).iter_mut().zip(t.row_slice(r)) {
            *o += v;
        }
    }
    out
}

fn phi_cdf(x: f64) -> f64 {
    0.5 * (1.0 + fmath::erf(x / core::f64::consts::SQRT_2))
}

fn phi_pdf(x: f64) -> f64 {
    fmath::exp(-0.5 * x * x) / fmath::sqrt(2.0 * core::f64::consts::PI)
}
