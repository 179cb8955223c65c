use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng as _;
use thiserror::Error;

use super::model::FastSpec;
use crate::fmath;
use crate::nn::{CeTarget, Gradients, Graph, Optimizer};
use crate::vocab::{CLS_ID, MASK_ID, PAD_ID, SPECIALS};
use crate::Rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BertError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("record {0} has no label")]
    Unlabeled(usize),
    #[error("sequence of {len} tokens exceeds max length {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty sequence")]
    EmptySequence,
}

/// How MLM targets are chosen and corrupted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlmPolicy {
    pub select_rate: f64,
    /// Share of selected positions replaced by `<MASK>`.
    pub mask_prob: f64,
    /// Share replaced by a uniformly drawn regular token; the rest are kept.
    pub random_prob: f64,
}

impl Default for MlmPolicy {
    fn default() -> Self {
        MlmPolicy { select_rate: 0.15, mask_prob: 0.8, random_prob: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlmSample {
    pub input: Vec<usize>,
    /// `(position, original id)` for every selected position, ascending.
    pub targets: Vec<(usize, usize)>,
}

/// Number of positions selected from `n` candidates.
pub fn mlm_count(n: usize, rate: f64) -> usize {
    if n == 0 {
        0
    } else {
        (fmath::round(rate * n as f64) as usize).clamp(1, n)
    }
}

/// Selects `mlm_count` positions among the non-`<PAD>`, non-`<CLS>` tokens
/// and corrupts them per `policy`.
pub fn mask_for_mlm(ids: &[usize], vocab_size: usize, policy: MlmPolicy, rng: &mut Rng) -> MlmSample {
    let candidates: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] != PAD_ID && ids[i] != CLS_ID).collect();
    let k = mlm_count(candidates.len(), policy.select_rate);
    let mut chosen: Vec<usize> = sample(rng, candidates.len(), k).into_iter().map(|j| candidates[j]).collect();
    chosen.sort_unstable();
    let lo = if vocab_size > SPECIALS.len() { SPECIALS.len() } else { 0 };
    let mut input = ids.to_vec();
    let mut targets = Vec::with_capacity(k);
    for p in chosen {
        targets.push((p, ids[p]));
        let u: f64 = rng.gen();
        if u < policy.mask_prob {
            input[p] = MASK_ID;
        } else if u < policy.mask_prob + policy.random_prob {
            input[p] = rng.gen_range(lo..vocab_size);
        }
    }
    MlmSample { input, targets }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NspPair {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub is_next: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NspData {
    pub pairs: Vec<NspPair>,
    /// NotNext pairs that could not be drawn because no other function exists.
    pub skipped: usize,
}

/// Splits `functions` into pieces of at most `piece_len` tokens. Every piece
/// with a successor yields one IsNext pair and one NotNext pair whose second
/// half comes from a different function; a function of a single piece yields
/// only the NotNext pair.
pub fn make_pieces_and_pairs(functions: &[Vec<usize>], piece_len: usize, rng: &mut Rng) -> NspData {
    let pieces: Vec<Vec<&[usize]>> = functions
        .iter()
        .map(|f| f.chunks(piece_len.max(1)).filter(|c| !c.is_empty()).collect())
        .collect();
    let donors: Vec<usize> = (0..pieces.len()).filter(|&i| !pieces[i].is_empty()).collect();
    let mut out = NspData::default();
    for (fi, ps) in pieces.iter().enumerate() {
        for (i, p) in ps.iter().enumerate() {
            let has_next = i + 1 < ps.len();
            if !has_next && ps.len() > 1 {
                continue;
            }
            if has_next {
                out.pairs.push(NspPair { first: p.to_vec(), second: ps[i + 1].to_vec(), is_next: true });
            }
            let others: Vec<usize> = donors.iter().copied().filter(|&d| d != fi).collect();
            if others.is_empty() {
                out.skipped += 1;
                continue;
            }
            let d = others[rng.gen_range(0..others.len())];
            let q = pieces[d][rng.gen_range(0..pieces[d].len())];
            out.pairs.push(NspPair { first: p.to_vec(), second: q.to_vec(), is_next: false });
        }
    }
    out
}

/// One pre-training input: `<CLS> a b` after MLM corruption.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PretrainExample {
    pub input: Vec<usize>,
    pub segments: Vec<usize>,
    pub mlm: Vec<(usize, usize)>,
    pub is_next: bool,
}

impl PretrainExample {
    pub fn from_pair(pair: &NspPair, vocab_size: usize, policy: MlmPolicy, rng: &mut Rng) -> Self {
        let mut ids = vec![CLS_ID];
        ids.extend_from_slice(&pair.first);
        ids.extend_from_slice(&pair.second);
        let mut segments = vec![0; 1 + pair.first.len()];
        segments.resize(ids.len(), 1);
        let s = mask_for_mlm(&ids, vocab_size, policy, rng);
        PretrainExample { input: s.input, segments, mlm: s.targets, is_next: pair.is_next }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainLoss {
    /// Mean cross-entropy over all MLM targets of the batch.
    pub mlm: f64,
    /// Mean next-piece cross-entropy over the batch.
    pub nsp: f64,
}

/// Losses and gradients of `mlm + nsp` on one batch.
pub fn pretrain_loss(model: &FastSpec, batch: &[PretrainExample]) -> Result<(PretrainLoss, Gradients), BertError> {
    if batch.is_empty() {
        return Err(BertError::EmptyBatch);
    }
    let total: usize = batch.iter().map(|e| e.mlm.len()).sum();
    let mut grads = Gradients::new(model.store.len());
    let mut loss = PretrainLoss { mlm: 0.0, nsp: 0.0 };
    for ex in batch {
        if ex.input.len() > model.config.max_len {
            return Err(BertError::TooLong { len: ex.input.len(), max: model.config.max_len });
        }
        let mut g = Graph::new(&model.store);
        let enc = model.encode(&mut g, &ex.input, Some(&ex.segments));
        let nl = model.nsp_logits(&mut g, enc.hidden);
        let t = [CeTarget { row: 0, class: ex.is_next as usize, weight: 1.0 / batch.len() as f64 }];
        let nsp = g.cross_entropy(nl, &t);
        loss.nsp += g.value(nsp).item();
        let l = if ex.mlm.is_empty() {
            nsp
        } else {
            let ml = model.mlm_logits(&mut g, enc.hidden);
            let t: Vec<CeTarget> = ex
                .mlm
                .iter()
                .map(|&(row, class)| CeTarget { row, class, weight: 1.0 / total as f64 })
                .collect();
            let mlm = g.cross_entropy(ml, &t);
            loss.mlm += g.value(mlm).item();
            g.add(mlm, nsp)
        };
        grads.merge(g.backward(l).params());
    }
    Ok((loss, grads))
}

/// One optimiser step on `mlm + nsp`; returns the losses before the update.
pub fn pretrain_step(model: &mut FastSpec, opt: &mut Optimizer, batch: &[PretrainExample]) -> Result<PretrainLoss, BertError> {
    let (loss, grads) = pretrain_loss(model, batch)?;
    opt.step(&mut model.store, &grads);
    Ok(loss)
}

/// A detector training record. `label` is 1 for a gadget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSeq {
    pub ids: Vec<usize>,
    pub label: Option<usize>,
}

/// `<CLS>` followed by at most `max_len - 1` tokens of `ids`.
pub fn with_cls(ids: &[usize], max_len: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(ids.len().min(max_len - 1) + 1);
    v.push(CLS_ID);
    v.extend(ids.iter().take(max_len - 1));
    v
}

/// Mean classification cross-entropy and its gradients.
pub fn finetune_loss(model: &FastSpec, batch: &[LabeledSeq]) -> Result<(f64, Gradients), BertError> {
    if batch.is_empty() {
        return Err(BertError::EmptyBatch);
    }
    let mut grads = Gradients::new(model.store.len());
    let mut loss = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let label = ex.label.ok_or(BertError::Unlabeled(i))?;
        if ex.ids.is_empty() {
            return Err(BertError::EmptySequence);
        }
        let ids = with_cls(&ex.ids, model.config.max_len);
        let mut g = Graph::new(&model.store);
        let enc = model.encode(&mut g, &ids, None);
        let logits = model.cls_logits(&mut g, enc.hidden);
        let l = g.cross_entropy(logits, &[CeTarget { row: 0, class: label, weight: 1.0 / batch.len() as f64 }]);
        loss += g.value(l).item();
        grads.merge(g.backward(l).params());
    }
    Ok((loss, grads))
}

pub fn finetune_step(model: &mut FastSpec, opt: &mut Optimizer, batch: &[LabeledSeq]) -> Result<f64, BertError> {
    let (loss, grads) = finetune_loss(model, batch)?;
    opt.step(&mut model.store, &grads);
    Ok(loss)
}

/// `steps` pre-training updates on batches of next-piece pairs drawn from
/// `functions`, with fresh MLM corruption every step.
pub fn pretrain_corpus(
    model: &mut FastSpec,
    opt: &mut Optimizer,
    functions: &[Vec<usize>],
    steps: usize,
    batch: usize,
    policy: MlmPolicy,
    rng: &mut Rng,
) -> Result<Vec<PretrainLoss>, BertError> {
    let pairs = make_pieces_and_pairs(functions, model.config.piece_len, rng).pairs;
    if pairs.is_empty() {
        return Err(BertError::EmptyBatch);
    }
    let v = model.config.vocab_size;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let b: Vec<PretrainExample> = sample(rng, pairs.len(), batch.min(pairs.len()))
            .into_iter()
            .map(|i| PretrainExample::from_pair(&pairs[i], v, policy, rng))
            .collect();
        out.push(pretrain_step(model, opt, &b)?);
    }
    Ok(out)
}

/// Shuffled mini-batch epochs of [`finetune_step`]; returns the mean loss
/// of every epoch.
pub fn fit_classifier(
    model: &mut FastSpec,
    opt: &mut Optimizer,
    data: &[LabeledSeq],
    epochs: usize,
    batch: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>, BertError> {
    use rand::seq::SliceRandom;
    if data.is_empty() {
        return Err(BertError::EmptyBatch);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut n = 0;
        for chunk in order.chunks(batch.max(1)) {
            let b: Vec<LabeledSeq> = chunk.iter().map(|&i| data[i].clone()).collect();
            total += finetune_step(model, opt, &b)?;
            n += 1;
        }
        out.push(total / n as f64);
    }
    Ok(out)
}

/// Gadget confidence of every record (no padding, truncated to max length).
pub fn confidences(model: &FastSpec, data: &[LabeledSeq]) -> Vec<f64> {
    data.iter().map(|e| model.confidence(&with_cls(&e.ids, model.config.max_len))).collect()
}
