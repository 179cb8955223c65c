use alloc::vec::Vec;

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::mask::MaskVector;
use crate::nn::attention::attend;
use crate::nn::init::{uniform, LSTM_INIT};
use crate::nn::{Graph, ParamId, ParamStore, StackedLstm, Tensor, Var};
use crate::vocab::{CLS_ID, MASK_ID};
use crate::Rng;

/// Token fed to the decoder before the first position.
pub const BOS_ID: usize = CLS_ID;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub vocab_size: usize,
    /// Embedding and hidden width.
    pub hidden: usize,
    pub layers: usize,
    pub mask_rate: f64,
    pub gamma: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub lr_c: f64,
    pub batch: usize,
    pub max_len: usize,
}

impl GanConfig {
    /// Full-size settings for a vocabulary of `vocab_size`.
    pub fn full(vocab_size: usize) -> Self {
        GanConfig {
            vocab_size,
            hidden: 64,
            layers: 2,
            mask_rate: 0.3,
            gamma: 0.89,
            lr_g: 5e-4,
            lr_d: 5e-3,
            lr_c: 5e-7,
            batch: 100,
            max_len: 250,
        }
    }

    /// Small preset for desk-scale runs and tests.
    pub fn desk(vocab_size: usize) -> Self {
        GanConfig { hidden: 32, batch: 10, max_len: 120, ..Self::full(vocab_size) }
    }
}

/// How masked positions are filled during generation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Temperature(f64),
    Argmax,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Temperature(1.0)
    }
}

/// Masked copy of `tokens`: `<MASK>` wherever `mask` is set.
pub fn apply_mask(tokens: &[usize], mask: &MaskVector) -> Vec<usize> {
    tokens.iter().zip(&mask.bits).map(|(&t, &m)| if m { MASK_ID } else { t }).collect()
}

/// Decoder feedback inputs: `BOS` followed by `tokens[..n-1]`.
pub fn shift_right(tokens: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(tokens.len());
    out.push(BOS_ID);
    out.extend_from_slice(&tokens[..tokens.len().saturating_sub(1)]);
    out
}

/// Encoder over the masked sequence, shared layout of generator and
/// discriminator.
#[derive(Clone, Debug, PartialEq)]
struct Seq2Seq {
    emb: ParamId,
    enc: StackedLstm,
    dec: StackedLstm,
    w_c: ParamId,
    w_s: ParamId,
}

impl Seq2Seq {
    fn new(store: &mut ParamStore, prefix: &str, cfg: &GanConfig, out: usize, rng: &mut Rng) -> Self {
        let h = cfg.hidden;
        let mut init = |r, c| uniform(r, c, LSTM_INIT, rng);
        let emb = store.add(alloc::format!("{prefix}.emb"), init(cfg.vocab_size, h));
        let enc = StackedLstm::new(store, &alloc::format!("{prefix}.enc"), h, h, cfg.layers, &mut init);
        let dec = StackedLstm::new(store, &alloc::format!("{prefix}.dec"), 2 * h, h, cfg.layers, &mut init);
        let w_c = store.add(alloc::format!("{prefix}.w_c"), init(2 * h, h));
        let w_s = store.add(alloc::format!("{prefix}.w_s"), init(h, out));
        Seq2Seq { emb, enc, dec, w_c, w_s }
    }

    /// Output logits (`N x out`) with decoder inputs `[emb(feed_t); emb(masked_t)]`.
    fn forward(&self, g: &mut Graph, masked: &[usize], feed: &[usize]) -> Var {
        let emb = g.param(self.emb);
        let xe = g.gather(emb, masked);
        let (enc_states, fin) = self.enc.run(g, xe, None);
        let xf = g.gather(emb, feed);
        let dec_in = g.concat_cols(&[xf, xe]);
        let (dec_states, _) = self.dec.run(g, dec_in, Some(fin));
        let w_c = g.param(self.w_c);
        let (att, _) = attend(g, dec_states, enc_states, w_c);
        let w_s = g.param(self.w_s);
        g.matmul(att, w_s)
    }
}

/// Masked seq2seq generator with attention.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator(Seq2Seq);

impl Generator {
    pub fn new(store: &mut ParamStore, cfg: &GanConfig, rng: &mut Rng) -> Self {
        Generator(Seq2Seq::new(store, "gen", cfg, cfg.vocab_size, rng))
    }

    /// Teacher-forced logits (`N x V`): position `t` sees `target[..t]` and
    /// the whole masked sequence.
    pub fn logits(&self, g: &mut Graph, masked: &[usize], target: &[usize]) -> Var {
        self.0.forward(g, masked, &shift_right(target))
    }

    /// Fills masked positions one at a time, feeding each chosen token back
    /// into the decoder. Unmasked positions are copied from `tokens`.
    pub fn generate(&self, store: &ParamStore, tokens: &[usize], mask: &MaskVector, sampling: Sampling, rng: &mut Rng) -> Vec<usize> {
        self.generate_excluding(store, tokens, mask, sampling, &[], rng)
    }

    /// [`Generator::generate`] with the ids in `banned` never chosen.
    pub fn generate_excluding(
        &self,
        store: &ParamStore,
        tokens: &[usize],
        mask: &MaskVector,
        sampling: Sampling,
        banned: &[usize],
        rng: &mut Rng,
    ) -> Vec<usize> {
        let mut out = tokens.to_vec();
        if mask.count() == 0 {
            return out;
        }
        let s = &self.0;
        let masked = apply_mask(tokens, mask);
        let mut g = Graph::new(store);
        let emb = g.param(s.emb);
        let xe = g.gather(emb, &masked);
        let (enc_states, fin) = s.enc.run(&mut g, xe, None);
        let mut state = fin;
        let w_c = g.param(s.w_c);
        let w_s = g.param(s.w_s);
        let mut prev = BOS_ID;
        for t in 0..tokens.len() {
            let xf = g.gather(emb, &[prev]);
            let xm = g.row(xe, t);
            let x = g.concat_cols(&[xf, xm]);
            let h = s.dec.step(&mut g, x, &mut state);
            if mask.bits[t] {
                let (att, _) = attend(&mut g, h, enc_states, w_c);
                let logits = g.matmul(att, w_s);
                let mut l = g.value(logits).data().to_vec();
                for &b in banned {
                    if let Some(x) = l.get_mut(b) {
                        *x = f64::NEG_INFINITY;
                    }
                }
                out[t] = choose(&l, sampling, rng);
            }
            prev = out[t];
        }
        out
    }
}

fn choose(logits: &[f64], sampling: Sampling, rng: &mut Rng) -> usize {
    match sampling {
        Sampling::Argmax => {
            let mut best = 0;
            for (i, &v) in logits.iter().enumerate() {
                if v > logits[best] {
                    best = i;
                }
            }
            best
        }
        Sampling::Temperature(temp) => {
            let scaled = Tensor::row(&logits.iter().map(|v| v / temp).collect::<Vec<_>>()).softmax_rows();
            WeightedIndex::new(scaled.data()).expect("finite probabilities").sample(rng)
        }
    }
}

/// Per-token real/fake scorer mirroring the generator layout with a
/// single output logit.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator(Seq2Seq);

impl Discriminator {
    pub fn new(store: &mut ParamStore, cfg: &GanConfig, rng: &mut Rng) -> Self {
        Discriminator(Seq2Seq::new(store, "disc", cfg, 1, rng))
    }

    /// Logits (`N x 1`) of `p_D(seq_t is real)`; the decoder reads `seq_t`
    /// at step `t` next to the masked token.
    pub fn logits(&self, g: &mut Graph, masked: &[usize], seq: &[usize]) -> Var {
        self.0.forward(g, masked, seq)
    }
}

/// Baseline estimator: a stacked LSTM from a zero state over the generated
/// sequence. Step `t` reads `seq[..t]`, so its estimate does not depend on
/// the token it is a baseline for.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    emb: ParamId,
    lstm: StackedLstm,
    w_b: ParamId,
}

impl Critic {
    pub fn new(store: &mut ParamStore, cfg: &GanConfig, rng: &mut Rng) -> Self {
        let h = cfg.hidden;
        let mut init = |r, c| uniform(r, c, LSTM_INIT, rng);
        let emb = store.add("critic.emb", init(cfg.vocab_size, h));
        let lstm = StackedLstm::new(store, "critic.lstm", h, h, cfg.layers, &mut init);
        let w_b = store.add("critic.w_b", init(h, 1));
        Critic { emb, lstm, w_b }
    }

    /// Logits (`N x 1`) of `p_C`.
    pub fn logits(&self, g: &mut Graph, seq: &[usize]) -> Var {
        let emb = g.param(self.emb);
        let x = g.gather(emb, &shift_right(seq));
        let (hs, _) = self.lstm.run(g, x, None);
        let w_b = g.param(self.w_b);
        g.matmul(hs, w_b)
    }
}

/// Generator, discriminator and critic sharing one parameter store
/// (names prefixed `gen.`, `disc.`, `critic.`).
#[derive(Clone, Debug, PartialEq)]
pub struct SpectreGan {
    pub config: GanConfig,
    pub store: ParamStore,
    pub gen: Generator,
    pub disc: Discriminator,
    pub critic: Critic,
}

pub const CHECKPOINT_KIND: &str = "spectregan";

impl SpectreGan {
    pub fn new(config: GanConfig, rng: &mut Rng) -> Self {
        let mut store = ParamStore::new();
        let gen = Generator::new(&mut store, &config, rng);
        let disc = Discriminator::new(&mut store, &config, rng);
        let critic = Critic::new(&mut store, &config, rng);
        SpectreGan { config, store, gen, disc, critic }
    }

    /// Per-token probabilities `p_D` for `seq` given its masked form.
    pub fn score_discriminator(&self, masked: &[usize], seq: &[usize]) -> Vec<f64> {
        let mut g = Graph::new(&self.store);
        let z = self.disc.logits(&mut g, masked, seq);
        g.value(z).data().iter().map(|&v| crate::fmath::sigmoid(v)).collect()
    }

    /// Per-token probabilities `p_C`.
    pub fn score_critic(&self, seq: &[usize]) -> Vec<f64> {
        let mut g = Graph::new(&self.store);
        let z = self.critic.logits(&mut g, seq);
        g.value(z).data().iter().map(|&v| crate::fmath::sigmoid(v)).collect()
    }

    pub fn generate(&self, tokens: &[usize], mask: &MaskVector, sampling: Sampling, rng: &mut Rng) -> Vec<usize> {
        self.gen.generate(&self.store, tokens, mask, sampling, rng)
    }

    /// Generation that never emits reserved vocabulary entries.
    pub fn generate_emittable(&self, tokens: &[usize], mask: &MaskVector, sampling: Sampling, rng: &mut Rng) -> Vec<usize> {
        let banned: Vec<usize> = (0..crate::vocab::SPECIALS.len()).collect();
        self.gen.generate_excluding(&self.store, tokens, mask, sampling, &banned, rng)
    }

    /// Names of parameters owned by one sub-model.
    pub fn owns(name: &str, model: &str) -> bool {
        name.starts_with(model) && name[model.len()..].starts_with('.')
    }
}
