//! Fixtures, brute-force oracles and gradient cases shared by the
//! integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use specforge_core::bert::{finetune_loss, pretrain_loss, FastSpec, LabeledSeq, MlmPolicy, NspPair, PretrainExample, TransformerConfig};
use specforge_core::gan::{
    critic_loss, discriminator_loss, generator_nll, make_mask, score_function_loss, Example, GanConfig,
    MaskPhase, SpectreGan,
};
use specforge_core::lexer::Token;
use specforge_core::nn::gradcheck::EPSILON;
use specforge_core::nn::{grad_check, grad_check_params, Graph, LstmLayer, ParamId, ParamStore, Tensor, Var};
use specforge_core::{nn, seeded_rng, Rng};


use rand::Rng as _;

// ---- toy data ----

/// Twenty 16-token sequences over ids 6..14 following `start + t*step`
/// cycles.
pub fn toy_grammar(n: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            let start = i % 8;
            let step = 1 + i % 3;
            (0..16).map(|t| 6 + (start + t * step) % 8).collect()
        })
        .collect()
}

pub const TOY_VOCAB: usize = 14;

// ---- brute-force oracles ----

/// AUC as the fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
pub fn pair_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut good = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                good += 1.0;
            } else if si == sj {
                good += 0.5;
            }
        }
    }
    good / pairs
}

fn gram_set(seqs: &[Vec<String>], n: usize) -> HashSet<Vec<String>> {
    let mut out = HashSet::new();
    for s in seqs {
        if s.len() >= n {
            for i in 0..=s.len() - n {
                out.insert(s[i..i + n].to_vec());
            }
        }
    }
    out
}

/// (base, new from fuzzing, new from gan, total) by set algebra.
pub fn brute_ngrams(base: &[Vec<String>], fuzz: &[Vec<String>], gan: &[Vec<String>], n: usize) -> (usize, usize, usize, usize) {
    let b = gram_set(base, n);
    let f = gram_set(fuzz, n);
    let g = gram_set(gan, n);
    let f_new: HashSet<_> = f.difference(&b).cloned().collect();
    let bf: HashSet<_> = b.union(&f).cloned().collect();
    let g_new = g.difference(&bf).count();
    let total = bf.union(&g).count();
    (b.len(), f_new.len(), g_new, total)
}

// ---- independent insertion validator ----

/// Reads the plain-text insertion table on its own terms and checks
/// inserted instructions against it.
pub struct InsertionOracle {
    widths: BTreeMap<String, u32>,
    signatures: BTreeMap<String, Vec<Vec<String>>>,
}

#[derive(Debug, PartialEq)]
enum Operand {
    Reg(u32),
    Imm(u64),
    Mem(Option<u64>),
    Target(String),
}

impl InsertionOracle {
    pub fn parse(text: &str) -> Self {
        let mut widths = BTreeMap::new();
        let mut signatures = BTreeMap::new();
        let mut section = "";
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                section = if line == "[registers]" { "r" } else { "i" };
                continue;
            }
            let (head, rest) = line.split_once(':').unwrap();
            if section == "r" {
                let w: u32 = head.trim().parse().unwrap();
                for r in rest.split_whitespace() {
                    widths.insert(format!("%{r}"), w);
                }
            } else {
                let sigs: Vec<Vec<String>> = if rest.trim().is_empty() {
                    Vec::new()
                } else {
                    rest.split('|').map(|s| s.split_whitespace().map(str::to_string).collect()).collect()
                };
                signatures.insert(head.trim().to_string(), sigs);
            }
        }
        InsertionOracle { widths, signatures }
    }

    fn operand(&self, toks: &[&str]) -> Result<Operand, String> {
        match toks {
            [r] if r.starts_with('%') => self.widths.get(*r).map(|&w| Operand::Reg(w)).ok_or(format!("unknown register {r}")),
            [i] if i.starts_with('$') => i[1..].parse().map(Operand::Imm).map_err(|_| format!("bad immediate {i}")),
            [t] => Ok(Operand::Target(t.to_string())),
            ["(", b, ")"] | [_, "(", b, ")"] if self.widths.get(*b) != Some(&64) => {
                Err(format!("memory base {b} is not a 64-bit register"))
            }
            ["(", _, ")"] => Ok(Operand::Mem(None)),
            [d, "(", _, ")"] => d.parse().map(|v| Operand::Mem(Some(v))).map_err(|_| format!("bad displacement {d}")),
            other => Err(format!("unparsed operand {other:?}")),
        }
    }

    fn slot_matches(slot: &str, op: &Operand, byte_sig: bool, labels: &[String], imms: &[u32]) -> bool {
        match (slot, op) {
            ("i", Operand::Imm(v)) => imms.iter().any(|&x| x as u64 == *v) && (!byte_sig || *v <= 255),
            ("m", Operand::Mem(d)) => d.is_none_or(|v| imms.iter().any(|&x| x as u64 == v)),
            ("t", Operand::Target(t)) => labels.iter().any(|l| l == t) || (labels.is_empty() && t == "."),
            (s, Operand::Reg(w)) => {
                let want = s.trim_start_matches(['r', 'x', 'y']).parse::<u32>().ok();
                want == Some(*w) && (s.starts_with('r') == (*w <= 64))
            }
            _ => false,
        }
    }

    /// Checks one inserted instruction: a known mnemonic whose operands
    /// fit one of its signatures exactly, with consistent widths.
    pub fn check(&self, tokens: &[Token], labels: &[String], imms: &[u32]) -> Result<(), String> {
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        let (mnemonic, rest) = texts.split_first().ok_or("empty insertion")?;
        let sigs = self.signatures.get(*mnemonic).ok_or(format!("mnemonic {mnemonic} not in table"))?;
        if sigs.is_empty() {
            return if rest.is_empty() { Ok(()) } else { Err(format!("{mnemonic} takes no operands")) };
        }
        let ops: Vec<Operand> = rest.split(|t| *t == ",").map(|o| self.operand(o)).collect::<Result<_, _>>()?;
        for sig in sigs {
            let byte_sig = sig.iter().any(|s| s == "r8");
            if sig.len() == ops.len() && sig.iter().zip(&ops).all(|(s, o)| Self::slot_matches(s, o, byte_sig, labels, imms)) {
                return Ok(());
            }
        }
        Err(format!("{texts:?} fits no signature of {mnemonic}"))
    }
}

// ---- gradient cases ----

fn probe(r: usize, c: usize, salt: f64) -> f64 {
    ((r * 31 + c * 17) as f64 * 0.37 + salt + 0.5).sin()
}

/// `Σ out ⊙ P` for a fixed pseudo-random `P`, so every output element
/// matters.
fn reduce(g: &mut Graph, out: Var, salt: f64) -> Var {
    let [r, c] = g.shape(out);
    let w = g.input(Tensor::from_fn(r, c, |i, j| probe(i, j, salt)));
    let p = g.mul(out, w);
    g.sum(p)
}

fn rand_t(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn check_graph(store: &mut ParamStore, f: impl Fn(&mut Graph) -> Var) -> f64 {
    grad_check(
        store,
        |s| {
            let mut g = Graph::new(s);
            let l = f(&mut g);
            (g.value(l).item(), g.backward(l).into_params())
        },
        EPSILON,
    )
    .max_rel_err
}

type Case = (&'static str, fn(&mut Graph, &[ParamId]) -> Var);

/// Worst relative gradient error of every tape operation on random inputs.
pub fn op_reports(seed: u64) -> Vec<(String, f64)> {
    let mut rng = seeded_rng(seed);
    let salt = seed as f64 * 0.1;
    let mut store = ParamStore::new();
    let a = store.add("a", rand_t(3, 4, &mut rng));
    let b = store.add("b", rand_t(3, 4, &mut rng));
    let m = store.add("m", rand_t(4, 2, &mut rng));
    let c = store.add("c", rand_t(2, 4, &mut rng));
    let r = store.add("r", rand_t(1, 4, &mut rng));
    let e = store.add("e", rand_t(5, 3, &mut rng));
    let w = store.add("w", rand_t(8, 4, &mut rng));
    let ids = [a, b, m, c, r, e, w];
    let cases: Vec<Case> = vec![
        ("matmul", |g, p| {
            let (x, y) = (g.param(p[0]), g.param(p[2]));
            g.matmul(x, y)
        }),
        ("matmul_bt", |g, p| {
            let (x, y) = (g.param(p[0]), g.param(p[3]));
            g.matmul_bt(x, y)
        }),
        ("add", |g, p| {
            let (x, y) = (g.param(p[0]), g.param(p[1]));
            g.add(x, y)
        }),
        ("sub", |g, p| {
            let (x, y) = (g.param(p[0]), g.param(p[1]));
            g.sub(x, y)
        }),
        ("mul", |g, p| {
            let (x, y) = (g.param(p[0]), g.param(p[1]));
            g.mul(x, y)
        }),
        ("add_row", |g, p| {
            let (x, y) = (g.param(p[0]), g.param(p[4]));
            g.add_row(x, y)
        }),
        ("mul_row", |g, p| {
            let (x, y) = (g.param(p[0]), g.param(p[4]));
            g.mul_row(x, y)
        }),
        ("scale", |g, p| {
            let x = g.param(p[0]);
            g.scale(x, -1.7)
        }),
        ("add_const", |g, p| {
            let x = g.param(p[0]);
            let y = g.add_const(x, 0.3);
            g.mul(y, y)
        }),
        ("sigmoid", |g, p| {
            let x = g.param(p[0]);
            g.sigmoid(x)
        }),
        ("tanh", |g, p| {
            let x = g.param(p[0]);
            g.tanh(x)
        }),
        ("gelu", |g, p| {
            let x = g.param(p[0]);
            g.gelu(x)
        }),
        ("log_sigmoid", |g, p| {
            let x = g.param(p[0]);
            g.log_sigmoid(x)
        }),
        ("slice_cols", |g, p| {
            let x = g.param(p[0]);
            g.slice_cols(x, 1, 2)
        }),
        ("concat_cols", |g, p| {
            let (x, y) = (g.param(p[0]), g.param(p[1]));
            g.concat_cols(&[x, y])
        }),
        ("slice_rows", |g, p| {
            let x = g.param(p[0]);
            g.slice_rows(x, 1, 2)
        }),
        ("row", |g, p| {
            let x = g.param(p[0]);
            g.row(x, 2)
        }),
        ("concat_rows", |g, p| {
            let (x, y) = (g.param(p[0]), g.param(p[1]));
            g.concat_rows(&[x, y])
        }),
        ("softmax_rows", |g, p| {
            let x = g.param(p[0]);
            g.softmax_rows(x, None)
        }),
        ("softmax_rows_masked", |g, p| {
            let x = g.param(p[0]);
            g.softmax_rows(x, Some(&[true, false, true, true]))
        }),
        ("layer_norm", |g, p| {
            let x = g.param(p[0]);
            g.layer_norm(x)
        }),
        ("sum", |g, p| {
            let x = g.param(p[0]);
            let s = g.sum(x);
            g.tanh(s)
        }),
        ("mean", |g, p| {
            let x = g.param(p[0]);
            let s = g.mean(x);
            g.sigmoid(s)
        }),
        ("cross_entropy", |g, p| {
            let x = g.param(p[0]);
            let t = [
                nn::CeTarget { row: 0, class: 1, weight: 0.7 },
                nn::CeTarget { row: 2, class: 3, weight: 1.3 },
                nn::CeTarget { row: 2, class: 0, weight: -0.4 },
            ];
            g.cross_entropy(x, &t)
        }),
        ("gather", |g, p| {
            let x = g.param(p[5]);
            g.gather(x, &[0, 2, 2, 4])
        }),
        ("attend", |g, p| {
            let (q, enc, wc) = (g.param(p[1]), g.param(p[0]), g.param(p[6]));
            nn::attend(g, q, enc, wc).0
        }),
    ];
    let mut out = Vec::new();
    for (name, f) in cases {
        let err = check_graph(&mut store, |g| {
            let o = f(g, &ids);
            reduce(g, o, salt)
        });
        out.push((name.to_string(), err));
    }
    let mut lstore = ParamStore::new();
    let layer = LstmLayer::new(&mut lstore, "l", 3, 4, |r, c| rand_t(r, c, &mut rng));
    let xs = rand_t(3, 3, &mut rng);
    let err = check_graph(&mut lstore, |g| {
        let x = g.input(xs.clone());
        let (hs, _) = layer.run(g, x, None);
        reduce(g, hs, salt)
    });
    out.push(("lstm".to_string(), err));
    out
}

fn gan_ids(gan: &SpectreGan, model: &str) -> Vec<ParamId> {
    gan.store.iter().filter(|(_, n, _)| SpectreGan::owns(n, model)).map(|(id, _, _)| id).collect()
}

fn with_store<T: Clone>(template: &T, s: &ParamStore, set: impl Fn(&mut T, ParamStore)) -> T {
    let mut m = template.clone();
    set(&mut m, s.clone());
    m
}

/// Worst relative gradient error of the generator, discriminator, critic
/// and policy-gradient losses and of the shrunk transformer's pre-training
/// and classification losses.
pub fn model_reports(seed: u64) -> Vec<(String, f64)> {
    let mut rng = seeded_rng(seed);
    let cfg = GanConfig { hidden: 4, layers: 2, ..GanConfig::desk(9) };
    let gan = SpectreGan::new(cfg, &mut rng);
    let tokens: Vec<usize> = (0..6).map(|_| rng.gen_range(6..9)).collect();
    let mask = make_mask(6, 0.3, MaskPhase::PretrainRandom, &mut rng).unwrap();
    let ex = Example::new(tokens.clone(), mask.clone()).unwrap();
    let fake: Vec<usize> = (0..6).map(|_| rng.gen_range(6..9)).collect();
    let returns: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..0.0)).collect();
    let adv: Vec<f64> = mask.positions().map(|_| rng.gen_range(-1.0..1.0)).collect();
    let set = |m: &mut SpectreGan, s: ParamStore| m.store = s;
    let mut out = Vec::new();

    let mut store = gan.store.clone();
    let e = grad_check_params(&mut store, &gan_ids(&gan, "gen"), |s| generator_nll(&with_store(&gan, s, set), std::slice::from_ref(&ex)).unwrap(), EPSILON);
    out.push(("generator".to_string(), e.max_rel_err));

    let e = grad_check_params(
        &mut store,
        &gan_ids(&gan, "disc"),
        |s| {
            let m = with_store(&gan, s, set);
            let mut g = Graph::new(&m.store);
            let l = discriminator_loss(&mut g, &m, &ex, &fake, 2.0);
            (g.value(l).item(), g.backward(l).into_params())
        },
        EPSILON,
    );
    out.push(("discriminator".to_string(), e.max_rel_err));

    let e = grad_check_params(
        &mut store,
        &gan_ids(&gan, "critic"),
        |s| {
            let m = with_store(&gan, s, set);
            let mut g = Graph::new(&m.store);
            let l = critic_loss(&mut g, &m, &fake, &mask, &returns, 2.0);
            (g.value(l).item(), g.backward(l).into_params())
        },
        EPSILON,
    );
    out.push(("critic".to_string(), e.max_rel_err));

    let e = grad_check_params(
        &mut store,
        &gan_ids(&gan, "gen"),
        |s| {
            let m = with_store(&gan, s, set);
            let mut g = Graph::new(&m.store);
            let masked = specforge_core::gan::apply_mask(&tokens, &mask);
            let logits = m.gen.logits(&mut g, &masked, &fake);
            let actions: Vec<(usize, usize)> = mask.positions().map(|t| (t, fake[t])).collect();
            let l = score_function_loss(&mut g, logits, &actions, &adv, 3.0);
            (g.value(l).item(), g.backward(l).into_params())
        },
        EPSILON,
    );
    out.push(("policy_gradient".to_string(), e.max_rel_err));

    let tcfg = TransformerConfig { layers: 1, hidden: 8, heads: 2, window: 12, stride: 4, ..TransformerConfig::full(12) };
    let model = FastSpec::new(tcfg, &mut rng).unwrap();
    let tset = |m: &mut FastSpec, s: ParamStore| m.store = s;
    let pair = NspPair { first: vec![6, 7, 8, 9], second: vec![10, 11, 6], is_next: seed % 2 == 0 };
    let pex = PretrainExample::from_pair(&pair, 12, MlmPolicy::default(), &mut rng);
    let mut ts = model.store.clone();
    let e = grad_check(
        &mut ts,
        |s| {
            let (l, g) = pretrain_loss(&with_store(&model, s, tset), std::slice::from_ref(&pex)).unwrap();
            (l.mlm + l.nsp, g)
        },
        EPSILON,
    );
    out.push(("transformer_pretrain".to_string(), e.max_rel_err));

    let batch = [LabeledSeq { ids: vec![6, 9, 7, 11], label: Some(1) }, LabeledSeq { ids: vec![8, 10], label: Some(0) }];
    let e = grad_check(&mut ts, |s| finetune_loss(&with_store(&model, s, tset), &batch).unwrap(), EPSILON);
    out.push(("transformer_classifier".to_string(), e.max_rel_err));
    out
}

// ---- toy training runs ----

fn toy_examples(data: &[Vec<usize>], phase: MaskPhase, rng: &mut Rng) -> Vec<Example> {
    data.iter().map(|s| Example::new(s.clone(), make_mask(s.len(), 0.3, phase, rng).unwrap()).unwrap()).collect()
}

/// Masked-token perplexity of a desk-size generator on the toy grammar
/// before and after `steps` maximum-likelihood updates.
pub fn toy_pretrain(steps: usize, lr: f64, seed: u64) -> (f64, f64) {
    use specforge_core::gan::{perplexity, pretrain_step};
    let mut rng = seeded_rng(seed);
    let cfg = GanConfig { batch: 20, ..GanConfig::desk(TOY_VOCAB) };
    let mut gan = SpectreGan::new(cfg, &mut rng);
    let data = toy_grammar(20);
    let eval = toy_examples(&data, MaskPhase::PretrainRandom, &mut seeded_rng(seed ^ 0x5eed));
    let mut opt = nn::Optimizer::adam(lr);
    let before = perplexity(&gan, &eval).unwrap();
    for _ in 0..steps {
        let batch = toy_examples(&data, MaskPhase::PretrainRandom, &mut rng);
        pretrain_step(&mut gan, &mut opt, &batch).unwrap();
    }
    (before, perplexity(&gan, &eval).unwrap())
}

/// Mean probability of a rewarded token at masked positions after each of
/// `steps` REINFORCE rounds, with an oracle paying 1 for that token.
pub fn toy_reinforce(steps: usize, lr: f64, seed: u64) -> Vec<f64> {
    use specforge_core::gan::{adversarial_step, masked_token_probability, GanOptimizers, MaskVector, RewardSource, Sampling};
    let mut rng = seeded_rng(seed);
    let cfg = GanConfig::desk(TOY_VOCAB);
    let mut gan = SpectreGan::new(cfg.clone(), &mut rng);
    let data = toy_grammar(20);
    let target = 9;
    let oracle = move |seq: &[usize], m: &MaskVector| -> Vec<f64> {
        seq.iter().zip(&m.bits).map(|(&t, &b)| if b && t == target { 1.0 } else { 0.0 }).collect()
    };
    let eval = toy_examples(&data, MaskPhase::AdversarialBlock, &mut seeded_rng(seed ^ 0x5eed));
    let mut opts = GanOptimizers { gen: nn::Optimizer::adam(lr), ..GanOptimizers::adam(&cfg) };
    let mut probs = vec![masked_token_probability(&gan, &eval, target)];
    for _ in 0..steps {
        let batch = toy_examples(&data[..10], MaskPhase::AdversarialBlock, &mut rng);
        adversarial_step(&mut gan, &mut opts, &batch, &RewardSource::Oracle(&oracle), Sampling::Temperature(1.0), &mut rng);
        probs.push(masked_token_probability(&gan, &eval, target));
    }
    probs
}
