use alloc::format;
use alloc::vec::Vec;

use super::config::{ConfigError, TransformerConfig};
use crate::fmath;
use crate::nn::init::{truncated_normal, TRANSFORMER_STD};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::vocab::PAD_ID;
use crate::Rng;

pub const CHECKPOINT_KIND: &str = "fastspec";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Affine {
    w: ParamId,
    b: ParamId,
}

impl Affine {
    fn new(store: &mut ParamStore, name: &str, i: usize, o: usize, rng: &mut Rng) -> Self {
        Affine {
            w: store.add(format!("{name}.w"), truncated_normal(i, o, TRANSFORMER_STD, rng)),
            b: store.add(format!("{name}.b"), Tensor::zeros(1, o)),
        }
    }

    fn apply(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

impl Norm {
    fn new(store: &mut ParamStore, name: &str, h: usize) -> Self {
        Norm {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(1, h, 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(1, h)),
        }
    }

    fn apply(&self, g: &mut Graph, x: Var) -> Var {
        let n = g.layer_norm(x);
        let gm = g.param(self.gamma);
        let bt = g.param(self.beta);
        let y = g.mul_row(n, gm);
        g.add_row(y, bt)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Block {
    q: Affine,
    k: Affine,
    v: Affine,
    o: Affine,
    ln1: Norm,
    ff1: Affine,
    ff2: Affine,
    ln2: Norm,
}

/// Encoder outputs of one forward pass.
pub struct Encoded {
    /// `N x H` final hidden states.
    pub hidden: Var,
    /// Attention matrices, one per layer and head (`N x N`).
    pub attention: Vec<Var>,
}

/// Post-LN bidirectional transformer encoder with MLM, next-piece and
/// classification heads.
#[derive(Clone, Debug, PartialEq)]
pub struct FastSpec {
    pub config: TransformerConfig,
    pub store: ParamStore,
    tok_emb: ParamId,
    pos_emb: ParamId,
    seg_emb: ParamId,
    emb_ln: Norm,
    blocks: Vec<Block>,
    mlm_transform: Affine,
    mlm_ln: Norm,
    mlm_bias: ParamId,
    pooler: Affine,
    nsp: Affine,
    cls: Affine,
}

impl FastSpec {
    pub fn new(config: TransformerConfig, rng: &mut Rng) -> Result<Self, ConfigError> {
        config.validate()?;
        let h = config.hidden;
        let mut s = ParamStore::new();
        let tok_emb = s.add("emb.tok", truncated_normal(config.vocab_size, h, TRANSFORMER_STD, rng));
        let pos_emb = s.add("emb.pos", truncated_normal(config.max_len, h, TRANSFORMER_STD, rng));
        let seg_emb = s.add("emb.seg", truncated_normal(2, h, TRANSFORMER_STD, rng));
        let emb_ln = Norm::new(&mut s, "emb.ln", h);
        let blocks = (0..config.layers)
            .map(|l| {
                let p = format!("layer{l}");
                Block {
                    q: Affine::new(&mut s, &format!("{p}.q"), h, h, rng),
                    k: Affine::new(&mut s, &format!("{p}.k"), h, h, rng),
                    v: Affine::new(&mut s, &format!("{p}.v"), h, h, rng),
                    o: Affine::new(&mut s, &format!("{p}.o"), h, h, rng),
                    ln1: Norm::new(&mut s, &format!("{p}.ln1"), h),
                    ff1: Affine::new(&mut s, &format!("{p}.ff1"), h, config.ffn_mult * h, rng),
                    ff2: Affine::new(&mut s, &format!("{p}.ff2"), config.ffn_mult * h, h, rng),
                    ln2: Norm::new(&mut s, &format!("{p}.ln2"), h),
                }
            })
            .collect();
        let mlm_transform = Affine::new(&mut s, "mlm.transform", h, h, rng);
        let mlm_ln = Norm::new(&mut s, "mlm.ln", h);
        let mlm_bias = s.add("mlm.bias", Tensor::zeros(1, config.vocab_size));
        let pooler = Affine::new(&mut s, "nsp.pooler", h, h, rng);
        let nsp = Affine::new(&mut s, "nsp.out", h, 2, rng);
        let cls = Affine::new(&mut s, "cls.out", h, 2, rng);
        Ok(FastSpec {
            config,
            store: s,
            tok_emb,
            pos_emb,
            seg_emb,
            emb_ln,
            blocks,
            mlm_transform,
            mlm_ln,
            mlm_bias,
            pooler,
            nsp,
            cls,
        })
    }

    /// Zeroes the classification head.
    pub fn zero_classifier(&mut self) {
        for id in [self.cls.w, self.cls.b] {
            let [r, c] = self.store.get(id).shape();
            *self.store.get_mut(id) = Tensor::zeros(r, c);
        }
    }

    /// Runs the encoder over `ids` (already including `<CLS>`). Segment
    /// embeddings are added only when `segments` is given. `<PAD>` keys are
    /// excluded from attention.
    pub fn encode(&self, g: &mut Graph, ids: &[usize], segments: Option<&[usize]>) -> Encoded {
        let n = ids.len();
        assert!(n <= self.config.max_len, "sequence of {n} exceeds max length {}", self.config.max_len);
        let keys: Vec<bool> = ids.iter().map(|&t| t != PAD_ID).collect();
        let tok = g.param(self.tok_emb);
        let pos = g.param(self.pos_emb);
        let x = g.gather(tok, ids);
        let p = g.slice_rows(pos, 0, n);
        let mut x = g.add(x, p);
        if let Some(segs) = segments {
            let se = g.param(self.seg_emb);
            let s = g.gather(se, segs);
            x = g.add(x, s);
        }
        let mut x = self.emb_ln.apply(g, x);
        let dh = self.config.head_dim();
        let scale = 1.0 / fmath::sqrt(dh as f64);
        let mut attention = Vec::new();
        for b in &self.blocks {
            let q = b.q.apply(g, x);
            let k = b.k.apply(g, x);
            let v = b.v.apply(g, x);
            let mut heads = Vec::with_capacity(self.config.heads);
            for h in 0..self.config.heads {
                let qh = g.slice_cols(q, h * dh, dh);
                let kh = g.slice_cols(k, h * dh, dh);
                let vh = g.slice_cols(v, h * dh, dh);
                let sc = g.matmul_bt(qh, kh);
                let sc = g.scale(sc, scale);
                let a = g.softmax_rows(sc, Some(&keys));
                attention.push(a);
                heads.push(g.matmul(a, vh));
            }
            let ctx = g.concat_cols(&heads);
            let o = b.o.apply(g, ctx);
            let r = g.add(x, o);
            x = b.ln1.apply(g, r);
            let f = b.ff1.apply(g, x);
            let f = g.gelu(f);
            let f = b.ff2.apply(g, f);
            let r = g.add(x, f);
            x = b.ln2.apply(g, r);
        }
        Encoded { hidden: x, attention }
    }

    /// Vocabulary logits (`N x V`) for every position, decoding through the
    /// transposed token embedding.
    pub fn mlm_logits(&self, g: &mut Graph, hidden: Var) -> Var {
        let t = self.mlm_transform.apply(g, hidden);
        let t = g.gelu(t);
        let t = self.mlm_ln.apply(g, t);
        let emb = g.param(self.tok_emb);
        let l = g.matmul_bt(t, emb);
        let bias = g.param(self.mlm_bias);
        g.add_row(l, bias)
    }

    /// Next-piece logits (`1 x 2`, index 1 = IsNext) from the `<CLS>` state.
    pub fn nsp_logits(&self, g: &mut Graph, hidden: Var) -> Var {
        let c = g.row(hidden, 0);
        let p = self.pooler.apply(g, c);
        let p = g.tanh(p);
        self.nsp.apply(g, p)
    }

    /// Gadget logits (`1 x 2`, index 1 = gadget) from the `<CLS>` state.
    pub fn cls_logits(&self, g: &mut Graph, hidden: Var) -> Var {
        let c = g.row(hidden, 0);
        self.cls.apply(g, c)
    }

    /// Gadget probability of `ids` (already including `<CLS>`).
    pub fn confidence(&self, ids: &[usize]) -> f64 {
        let mut g = Graph::new(&self.store);
        let enc = self.encode(&mut g, ids, None);
        let l = self.cls_logits(&mut g, enc.hidden);
        g.value(l).softmax_rows()[(0, 1)]
    }
}
