use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mask::{make_mask, MaskPhase, MaskVector};
use super::model::{apply_mask, Sampling, SpectreGan};
use crate::fmath;
use crate::nn::{CeTarget, Gradients, Graph, Optimizer, Tensor, Var};
use crate::Rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GanError {
    #[error("batch has no masked tokens")]
    NoMaskedTokens,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("sequence and mask lengths differ ({0} vs {1})")]
    Length(usize, usize),
}

/// A training example: token ids and its mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub mask: MaskVector,
}

impl Example {
    pub fn new(tokens: Vec<usize>, mask: MaskVector) -> Result<Self, GanError> {
        if tokens.len() != mask.len() {
            return Err(GanError::Length(tokens.len(), mask.len()));
        }
        Ok(Example { tokens, mask })
    }
}

/// `R_t = m_t·r_t + γ·R_{t+1}`, i.e. `Σ_{s≥t} γ^{s−t} m_s r_s`.
pub fn discounted_returns(rewards: &[f64], mask: &[bool], gamma: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let r = if mask[t] { rewards[t] } else { 0.0 };
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Surrogate whose gradient is the negated score-function estimate
/// `−Σ_k a_k ∇ log softmax(logits[row_k])[action_k]`, scaled by `norm`.
pub fn score_function_loss(g: &mut Graph, logits: Var, actions: &[(usize, usize)], advantages: &[f64], norm: f64) -> Var {
    let targets: Vec<CeTarget> = actions
        .iter()
        .zip(advantages)
        .map(|(&(row, class), &a)| CeTarget { row, class, weight: a / norm })
        .collect();
    g.cross_entropy(logits, &targets)
}

/// Draws `n` categorical samples by stratified inverse-CDF sampling: the
/// `i`-th uniform lies in `[i/n, (i+1)/n)`.
pub fn stratified_categorical(probs: &[f64], n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cdf.push(acc);
    }
    (0..n)
        .map(|i| {
            let u = (i as f64 + rng.gen::<f64>()) / n as f64 * acc;
            cdf.iter().position(|&c| u < c).unwrap_or(probs.len() - 1)
        })
        .collect()
}

fn mask_column(mask: &MaskVector) -> Tensor {
    Tensor::new(mask.len(), 1, mask.as_f64()).unwrap()
}

/// Mean masked-token negative log-likelihood of one batch under teacher
/// forcing, with its gradients.
pub fn generator_nll(gan: &SpectreGan, batch: &[Example]) -> Result<(f64, Gradients), GanError> {
    let total: usize = batch.iter().map(|e| e.mask.count()).sum();
    if total == 0 {
        return Err(GanError::NoMaskedTokens);
    }
    let mut grads = Gradients::new(gan.store.len());
    let mut loss = 0.0;
    for ex in batch {
        if ex.mask.count() == 0 {
            continue;
        }
        let mut g = Graph::new(&gan.store);
        let masked = apply_mask(&ex.tokens, &ex.mask);
        let logits = gan.gen.logits(&mut g, &masked, &ex.tokens);
        let targets: Vec<CeTarget> = ex
            .mask
            .positions()
            .map(|t| CeTarget { row: t, class: ex.tokens[t], weight: 1.0 / total as f64 })
            .collect();
        let l = g.cross_entropy(logits, &targets);
        loss += g.value(l).item();
        grads.merge(g.backward(l).params());
    }
    Ok((loss, grads))
}

/// One maximum-likelihood step on masked positions. Returns the loss
/// before the update.
pub fn pretrain_step(gan: &mut SpectreGan, opt: &mut Optimizer, batch: &[Example]) -> Result<f64, GanError> {
    let (loss, grads) = generator_nll(gan, batch)?;
    opt.step(&mut gan.store, &grads);
    Ok(loss)
}

/// `exp` of the mean masked-token negative log-likelihood.
pub fn perplexity(gan: &SpectreGan, corpus: &[Example]) -> Result<f64, GanError> {
    if corpus.is_empty() {
        return Err(GanError::EmptyCorpus);
    }
    let total: usize = corpus.iter().map(|e| e.mask.count()).sum();
    if total == 0 {
        return Err(GanError::NoMaskedTokens);
    }
    let mut nll = 0.0;
    for ex in corpus {
        let mut g = Graph::new(&gan.store);
        let masked = apply_mask(&ex.tokens, &ex.mask);
        let logits = gan.gen.logits(&mut g, &masked, &ex.tokens);
        let lv = g.value(logits);
        for t in ex.mask.positions() {
            nll -= crate::nn::tensor::log_softmax_at(lv.row_slice(t), ex.tokens[t]);
        }
    }
    Ok(fmath::exp(nll / total as f64))
}

/// Mean generator probability of `token` at masked positions, teacher
/// forced on the real prefix.
pub fn masked_token_probability(gan: &SpectreGan, corpus: &[Example], token: usize) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ex in corpus {
        let mut g = Graph::new(&gan.store);
        let masked = apply_mask(&ex.tokens, &ex.mask);
        let logits = gan.gen.logits(&mut g, &masked, &ex.tokens);
        let p = g.value(logits).softmax_rows();
        for t in ex.mask.positions() {
            sum += p[(t, token)];
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Where per-token rewards come from.
pub enum RewardSource<'a> {
    /// `r_t = log p_D(x̃_t)` from the trained discriminator.
    Discriminator,
    /// Fixed reward function of the generated sequence; the discriminator
    /// is neither queried nor trained.
    Oracle(&'a dyn Fn(&[usize], &MaskVector) -> Vec<f64>),
}

pub struct GanOptimizers {
    pub gen: Optimizer,
    pub disc: Optimizer,
    pub critic: Optimizer,
}

impl GanOptimizers {
    pub fn adam(cfg: &super::model::GanConfig) -> Self {
        GanOptimizers { gen: Optimizer::adam(cfg.lr_g), disc: Optimizer::adam(cfg.lr_d), critic: Optimizer::adam(cfg.lr_c) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvLosses {
    pub g_loss: f64,
    pub d_loss: f64,
    pub c_loss: f64,
    pub mean_reward: f64,
    /// True when there were no masked tokens and only the discriminator
    /// saw data.
    pub d_only: bool,
}

/// Discriminator loss on real and fake sequences at masked positions.
pub fn discriminator_loss(g: &mut Graph, gan: &SpectreGan, ex: &Example, fake: &[usize], norm: f64) -> Var {
    let masked = apply_mask(&ex.tokens, &ex.mask);
    let m = g.input(mask_column(&ex.mask));
    let zr = gan.disc.logits(g, &masked, &ex.tokens);
    let lr = g.log_sigmoid(zr);
    let lr = g.mul(lr, m);
    let zf = gan.disc.logits(g, &masked, fake);
    let nzf = g.scale(zf, -1.0);
    let lf = g.log_sigmoid(nzf);
    let lf = g.mul(lf, m);
    let both = g.add(lr, lf);
    let s = g.sum(both);
    g.scale(s, -1.0 / norm)
}

/// Squared error between `log p_C` and the returns at masked positions.
pub fn critic_loss(g: &mut Graph, gan: &SpectreGan, seq: &[usize], mask: &MaskVector, returns: &[f64], norm: f64) -> Var {
    let z = gan.critic.logits(g, seq);
    let b = g.log_sigmoid(z);
    let r = g.input(Tensor::new(returns.len(), 1, returns.to_vec()).unwrap());
    let d = g.sub(b, r);
    let d = g.mul(d, d);
    let m = g.input(mask_column(mask));
    let d = g.mul(d, m);
    let s = g.sum(d);
    g.scale(s, 1.0 / norm)
}

/// One adversarial round: sample fills, compute rewards and returns, update
/// the generator with REINFORCE against the critic baseline, regress the
/// critic on the returns and train the discriminator.
pub fn adversarial_step(
    gan: &mut SpectreGan,
    opts: &mut GanOptimizers,
    batch: &[Example],
    rewards: &RewardSource,
    sampling: Sampling,
    rng: &mut Rng,
) -> AdvLosses {
    let gamma = gan.config.gamma;
    let total: usize = batch.iter().map(|e| e.mask.count()).sum();
    let mut out = AdvLosses::default();
    let n_params = gan.store.len();
    let (mut gg, mut gd, mut gc) = (Gradients::new(n_params), Gradients::new(n_params), Gradients::new(n_params));
    if total == 0 {
        out.d_only = true;
        if let RewardSource::Discriminator = rewards {
            for ex in batch {
                let mut g = Graph::new(&gan.store);
                let l = discriminator_loss(&mut g, gan, ex, &ex.tokens, batch.len() as f64);
                out.d_loss += g.value(l).item();
                gd.merge(g.backward(l).params());
            }
            opts.disc.step(&mut gan.store, &gd);
        }
        return out;
    }
    let norm = total as f64;
    for ex in batch {
        let fake = gan.generate(&ex.tokens, &ex.mask, sampling, rng);
        let masked = apply_mask(&ex.tokens, &ex.mask);
        let r: Vec<f64> = match rewards {
            RewardSource::Discriminator => {
                let p = gan.score_discriminator(&masked, &fake);
                p.iter().map(|&v| fmath::ln(v.max(1e-300))).collect()
            }
            RewardSource::Oracle(f) => f(&fake, &ex.mask),
        };
        out.mean_reward += ex.mask.positions().map(|t| r[t]).sum::<f64>() / norm;
        let returns = discounted_returns(&r, &ex.mask.bits, gamma);
        let baseline: Vec<f64> = gan.score_critic(&fake).iter().map(|&p| fmath::ln(p.max(1e-300))).collect();

        let mut g = Graph::new(&gan.store);
        let logits = gan.gen.logits(&mut g, &masked, &fake);
        let actions: Vec<(usize, usize)> = ex.mask.positions().map(|t| (t, fake[t])).collect();
        let adv: Vec<f64> = ex.mask.positions().map(|t| returns[t] - baseline[t]).collect();
        let l = score_function_loss(&mut g, logits, &actions, &adv, norm);
        out.g_loss += g.value(l).item();
        gg.merge(g.backward(l).params());

        let mut g = Graph::new(&gan.store);
        let l = critic_loss(&mut g, gan, &fake, &ex.mask, &returns, norm);
        out.c_loss += g.value(l).item();
        gc.merge(g.backward(l).params());

        if let RewardSource::Discriminator = rewards {
            let mut g = Graph::new(&gan.store);
            let l = discriminator_loss(&mut g, gan, ex, &fake, norm);
            out.d_loss += g.value(l).item();
            gd.merge(g.backward(l).params());
        }
    }
    opts.gen.step(&mut gan.store, &gg);
    opts.critic.step(&mut gan.store, &gc);
    if let RewardSource::Discriminator = rewards {
        opts.disc.step(&mut gan.store, &gd);
    }
    out
}

fn batch_of<'a>(corpus: &'a [Vec<usize>], size: usize, rng: &mut Rng) -> Vec<&'a Vec<usize>> {
    rand::seq::index::sample(rng, corpus.len(), size.min(corpus.len())).into_iter().map(|i| &corpus[i]).collect()
}

fn trainable(corpus: &[Vec<usize>], max_len: usize) -> Result<Vec<Vec<usize>>, GanError> {
    let v: Vec<Vec<usize>> = corpus.iter().filter(|s| s.len() >= 2).map(|s| s[..s.len().min(max_len)].to_vec()).collect();
    if v.is_empty() {
        return Err(GanError::EmptyCorpus);
    }
    Ok(v)
}

/// `steps` maximum-likelihood updates on random batches of `corpus` with
/// fresh random masks. Returns the loss of every step.
pub fn pretrain(gan: &mut SpectreGan, opt: &mut Optimizer, corpus: &[Vec<usize>], steps: usize, rng: &mut Rng) -> Result<Vec<f64>, GanError> {
    let corpus = trainable(corpus, gan.config.max_len)?;
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let batch: Vec<Example> = batch_of(&corpus, gan.config.batch, rng)
            .into_iter()
            .map(|s| {
                let m = make_mask(s.len(), gan.config.mask_rate, MaskPhase::PretrainRandom, rng).expect("length checked");
                Example { tokens: s.clone(), mask: m }
            })
            .collect();
        losses.push(pretrain_step(gan, opt, &batch)?);
    }
    Ok(losses)
}

/// `steps` adversarial rounds on random batches with contiguous masks.
pub fn adversarial(
    gan: &mut SpectreGan,
    opts: &mut GanOptimizers,
    corpus: &[Vec<usize>],
    steps: usize,
    rewards: &RewardSource,
    sampling: Sampling,
    rng: &mut Rng,
) -> Result<Vec<AdvLosses>, GanError> {
    let corpus = trainable(corpus, gan.config.max_len)?;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let batch: Vec<Example> = batch_of(&corpus, gan.config.batch, rng)
            .into_iter()
            .map(|s| {
                let m = make_mask(s.len(), gan.config.mask_rate, MaskPhase::AdversarialBlock, rng).expect("length checked");
                Example { tokens: s.clone(), mask: m }
            })
            .collect();
        out.push(adversarial_step(gan, opts, &batch, rewards, sampling, rng));
    }
    Ok(out)
}
