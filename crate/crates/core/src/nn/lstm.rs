use alloc::format;
use alloc::vec::Vec;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::{ShapeError, Tensor};
use crate::fmath;

/// One LSTM layer. Gate blocks are laid out `i, f, g, o` along the columns
/// of `w_x`, `w_h` and `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmLayer {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        mut init: impl FnMut(usize, usize) -> Tensor,
    ) -> Self {
        LstmLayer {
            w_x: store.add(format!("{prefix}.w_x"), init(input, 4 * hidden)),
            w_h: store.add(format!("{prefix}.w_h"), init(hidden, 4 * hidden)),
            b: store.add(format!("{prefix}.b"), init(1, 4 * hidden)),
            input,
            hidden,
        }
    }

    fn gates(&self, g: &mut Graph, z: Var, c: Var) -> (Var, Var) {
        let h = self.hidden;
        let zi = g.slice_cols(z, 0, h);
        let zf = g.slice_cols(z, h, h);
        let zg = g.slice_cols(z, 2 * h, h);
        let zo = g.slice_cols(z, 3 * h, h);
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let fc = g.mul(f, c);
        let ig = g.mul(i, cand);
        let c_new = g.add(fc, ig);
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc);
        (h_new, c_new)
    }

    /// One step on a batch of rows.
    pub fn step(&self, g: &mut Graph, x: Var, h: Var, c: Var) -> (Var, Var) {
        let wx = g.param(self.w_x);
        let wh = g.param(self.w_h);
        let b = g.param(self.b);
        let xw = g.matmul(x, wx);
        let hw = g.matmul(h, wh);
        let z = g.add(xw, hw);
        let z = g.add_row(z, b);
        self.gates(g, z, c)
    }

    /// Runs over the rows of `xs` (one time step per row, batch size 1).
    /// Returns the stacked hidden states and the final `(h, c)`.
    pub fn run(&self, g: &mut Graph, xs: Var, state: Option<(Var, Var)>) -> (Var, (Var, Var)) {
        let n = g.shape(xs)[0];
        let wx = g.param(self.w_x);
        let wh = g.param(self.w_h);
        let b = g.param(self.b);
        let xw = g.matmul(xs, wx);
        let xw = g.add_row(xw, b);
        let (mut h, mut c) = state.unwrap_or_else(|| zero_state(g, 1, self.hidden));
        let mut hs = Vec::with_capacity(n);
        for t in 0..n {
            let zx = g.row(xw, t);
            let hw = g.matmul(h, wh);
            let z = g.add(zx, hw);
            (h, c) = self.gates(g, z, c);
            hs.push(h);
        }
        (g.concat_rows(&hs), (h, c))
    }
}

pub fn zero_state(g: &mut Graph, rows: usize, hidden: usize) -> (Var, Var) {
    let h = g.input(Tensor::zeros(rows, hidden));
    let c = g.input(Tensor::zeros(rows, hidden));
    (h, c)
}

/// Layers applied in sequence, each feeding its hidden states to the next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackedLstm {
    pub layers: Vec<LstmLayer>,
}

pub type LstmState = Vec<(Var, Var)>;

impl StackedLstm {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        depth: usize,
        mut init: impl FnMut(usize, usize) -> Tensor,
    ) -> Self {
        let layers = (0..depth)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                LstmLayer::new(store, &format!("{prefix}.l{l}"), inp, hidden, &mut init)
            })
            .collect();
        StackedLstm { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn zero_state(&self, g: &mut Graph) -> LstmState {
        self.layers.iter().map(|l| zero_state(g, 1, l.hidden)).collect()
    }

    pub fn run(&self, g: &mut Graph, xs: Var, state: Option<LstmState>) -> (Var, LstmState) {
        let mut out = xs;
        let mut finals = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let s = state.as_ref().map(|s| s[l]);
            let (hs, fin) = layer.run(g, out, s);
            out = hs;
            finals.push(fin);
        }
        (out, finals)
    }

    /// One step through every layer; returns the top hidden state.
    pub fn step(&self, g: &mut Graph, x: Var, state: &mut LstmState) -> Var {
        let mut inp = x;
        for (layer, s) in self.layers.iter().zip(state.iter_mut()) {
            let (h, c) = layer.step(g, inp, s.0, s.1);
            *s = (h, c);
            inp = h;
        }
        inp
    }
}

/// Plain-tensor LSTM cell, independent of the autodiff tape.
pub fn lstm_step(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    w_x: &Tensor,
    w_h: &Tensor,
    b: &Tensor,
) -> Result<(Tensor, Tensor), ShapeError> {
    let hd = h_prev.cols();
    let mismatch = |a: &Tensor, b: &Tensor| ShapeError::Mismatch { op: "lstm_step", a: a.shape(), b: b.shape() };
    if c_prev.shape() != h_prev.shape() {
        return Err(mismatch(h_prev, c_prev));
    }
    if w_h.shape() != [hd, 4 * hd] {
        return Err(mismatch(h_prev, w_h));
    }
    if b.shape() != [1, 4 * hd] {
        return Err(mismatch(h_prev, b));
    }
    let mut z = x.matmul(w_x)?;
    if z.cols() != 4 * hd {
        return Err(mismatch(x, w_x));
    }
    z.add_assign(&h_prev.matmul(w_h)?);
    let mut h = Tensor::zeros(h_prev.rows(), hd);
    let mut c = Tensor::zeros(h_prev.rows(), hd);
    for r in 0..z.rows() {
        for k in 0..hd {
            let i = fmath::sigmoid(z[(r, k)] + b[(0, k)]);
            let f = fmath::sigmoid(z[(r, hd + k)] + b[(0, hd + k)]);
            let gg = fmath::tanh(z[(r, 2 * hd + k)] + b[(0, 2 * hd + k)]);
            let o = fmath::sigmoid(z[(r, 3 * hd + k)] + b[(0, 3 * hd + k)]);
            c[(r, k)] = f * c_prev[(r, k)] + i * gg;
            h[(r, k)] = o * fmath::tanh(c[(r, k)]);
        }
    }
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init::uniform;
    use crate::seeded_rng;

    #[test]
    fn zero_everything_gives_zero_h() {
        let (h, c) = lstm_step(
            &Tensor::zeros(1, 3),
            &Tensor::zeros(1, 2),
            &Tensor::zeros(1, 2),
            &Tensor::zeros(3, 8),
            &Tensor::zeros(2, 8),
            &Tensor::zeros(1, 8),
        )
        .unwrap();
        assert_eq!(h.data(), &[0.0, 0.0]);
        assert_eq!(c.data(), &[0.0, 0.0]);
    }

    #[test]
    fn hand_computed_unit() {
        // Single unit, input weight 1 on every gate, biases set per gate.
        let x = Tensor::scalar(0.5);
        let w_x = Tensor::row(&[1.0, 1.0, 1.0, 1.0]);
        let w_h = Tensor::row(&[0.0, 0.0, 0.0, 0.0]);
        let b = Tensor::row(&[0.0, 1.0, -1.0, 2.0]);
        let (h, c) = lstm_step(&x, &Tensor::scalar(0.0), &Tensor::scalar(0.3), &w_x, &w_h, &b).unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v as f64).exp());
        let c_ref = sig(1.5) * 0.3 + sig(0.5) * (-0.5f64).tanh();
        let h_ref = sig(2.5) * c_ref.tanh();
        assert!((c.item() - c_ref).abs() < 1e-12);
        assert!((h.item() - h_ref).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let r = lstm_step(
            &Tensor::zeros(1, 3),
            &Tensor::zeros(1, 2),
            &Tensor::zeros(1, 2),
            &Tensor::zeros(4, 8),
            &Tensor::zeros(2, 8),
            &Tensor::zeros(1, 8),
        );
        assert!(r.is_err());
    }

    #[test]
    fn graph_matches_tensor_cell_and_stacking_composes() {
        let mut rng = seeded_rng(11);
        let mut store = ParamStore::new();
        let stack = StackedLstm::new(&mut store, "s", 3, 4, 2, |r, c| uniform(r, c, 0.5, &mut rng));
        let xs = uniform(5, 3, 1.0, &mut rng);
        let mut g = Graph::new(&store);
        let xv = g.input(xs.clone());
        let (top, _) = stack.run(&mut g, xv, None);
        let top = g.value(top).clone();

        let mut out = xs;
        for layer in &stack.layers {
            let mut h = Tensor::zeros(1, 4);
            let mut c = Tensor::zeros(1, 4);
            let mut rows = Vec::new();
            for t in 0..out.rows() {
                let x = Tensor::row(out.row_slice(t));
                (h, c) = lstm_step(&x, &h, &c, store.get(layer.w_x), store.get(layer.w_h), store.get(layer.b)).unwrap();
                rows.extend_from_slice(h.data());
            }
            out = Tensor::new(out.rows(), 4, rows).unwrap();
        }
        for (a, b) in top.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(top.data().iter().all(|v| v.abs() < 1.0));
    }
}
