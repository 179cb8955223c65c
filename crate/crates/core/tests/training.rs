mod support;

use rand::seq::SliceRandom;
use specforge_core::bert::{
    finetune_loss, mask_for_mlm, pretrain_loss, window_scan, window_starts, FastSpec, LabeledSeq, MlmPolicy, NspPair,
    PretrainExample, TransformerConfig,
};
use specforge_core::gan::{stratified_categorical, GanConfig, SpectreGan};
use specforge_core::nn::Tensor;
use specforge_core::vocab::{MASK_ID, SPECIALS};
use specforge_core::{seeded_rng, Rng};

fn tiny(v: usize, rng: &mut Rng) -> FastSpec {
    let cfg = TransformerConfig { layers: 1, hidden: 8, heads: 2, window: 12, stride: 4, ..TransformerConfig::full(v) };
    FastSpec::new(cfg, rng).unwrap()
}

#[test]
fn mlm_corruption_branches() {
    let mut rng = seeded_rng(1);
    let ids: Vec<usize> = (0..200).map(|i| 6 + i % 30).collect();
    let (mut masked, mut random, mut kept, mut total) = (0, 0, 0, 0);
    for _ in 0..500 {
        let s = mask_for_mlm(&ids, 36, MlmPolicy::default(), &mut rng);
        assert_eq!(s.targets.len(), 30);
        for &(p, orig) in &s.targets {
            total += 1;
            match s.input[p] {
                MASK_ID => masked += 1,
                x if x == orig => kept += 1,
                x => {
                    assert!(x >= SPECIALS.len());
                    random += 1
                }
            }
        }
    }
    // A random replacement equal to the original lands in `kept`.
    let f = |c: usize| c as f64 / total as f64;
    assert!((f(masked) - 0.8).abs() < 0.01, "{}", f(masked));
    assert!((f(random) - 0.1 * 29.0 / 30.0).abs() < 0.01, "{}", f(random));
    assert!((f(kept) - (0.1 + 0.1 / 30.0)).abs() < 0.01, "{}", f(kept));
}

#[test]
fn zero_weights_give_uniform_losses() {
    let mut rng = seeded_rng(2);
    let v = 25;
    let mut m = tiny(v, &mut rng);
    let ids: Vec<_> = m.store.ids().collect();
    for id in ids {
        let [r, c] = m.store.get(id).shape();
        *m.store.get_mut(id) = Tensor::zeros(r, c);
    }
    let pair = NspPair { first: vec![6, 7, 8, 9, 10], second: vec![11, 12, 13], is_next: true };
    let ex = PretrainExample::from_pair(&pair, v, MlmPolicy::default(), &mut rng);
    let (l, _) = pretrain_loss(&m, &[ex]).unwrap();
    assert!((l.mlm - (v as f64).ln()).abs() < 1e-12, "{}", l.mlm);
    assert!((l.nsp - 2f64.ln()).abs() < 1e-12, "{}", l.nsp);
    let (c, _) = finetune_loss(&m, &[LabeledSeq { ids: vec![6, 7], label: Some(1) }]).unwrap();
    assert!((c - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn batch_order_does_not_matter() {
    let mut rng = seeded_rng(3);
    let m = tiny(20, &mut rng);
    let mut batch: Vec<LabeledSeq> =
        (0..6).map(|i| LabeledSeq { ids: (0..3 + i).map(|k| 6 + (k * 7 + i) % 14).collect(), label: Some(i % 2) }).collect();
    let (l0, g0) = finetune_loss(&m, &batch).unwrap();
    batch.shuffle(&mut rng);
    let (l1, g1) = finetune_loss(&m, &batch).unwrap();
    assert!((l0 - l1).abs() < 1e-12);
    for id in m.store.ids() {
        let (a, b) = (g0.get_or_zero(id, &m.store), g1.get_or_zero(id, &m.store));
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}

#[test]
fn scan_score_is_best_window() {
    let mut rng = seeded_rng(4);
    let m = tiny(20, &mut rng);
    let stream: Vec<usize> = (0..57).map(|i| 6 + (i * 5) % 14).collect();
    let r = window_scan(&m, &stream, 12, 4, 0.48);
    let starts = window_starts(stream.len(), 12, 4);
    assert_eq!(r.windows.iter().map(|w| w.start).collect::<Vec<_>>(), starts);
    assert_eq!(starts.last().map(|s| s + 12 >= stream.len()), Some(true));
    let best = r.windows.iter().map(|w| w.confidence).fold(0.0, f64::max);
    assert_eq!(r.score, best);
    // Raising the threshold can only unflag.
    let mut prev = true;
    for k in 0..=20 {
        let f = window_scan(&m, &stream, 12, 4, k as f64 / 20.0).flagged;
        assert!(prev || !f);
        prev = f;
    }
    // Extending the stream never lowers the score of the windows it keeps.
    let mut longer = stream.clone();
    longer.extend([7, 8, 9, 10, 11, 12, 13, 14]);
    let r2 = window_scan(&m, &longer, 12, 4, 0.48);
    for w in r.windows.iter().filter(|w| w.start % 4 == 0) {
        let same = r2.windows.iter().find(|x| x.start == w.start).unwrap();
        assert_eq!(same.confidence, w.confidence);
    }
    assert!(r2.score >= r.windows.iter().filter(|w| w.start % 4 == 0).map(|w| w.confidence).fold(0.0, f64::max));
}

#[test]
fn stratified_sample_tracks_probabilities() {
    let probs = [0.5, 0.25, 0.125, 0.0625, 0.0625];
    let draws = stratified_categorical(&probs, 100_000, &mut seeded_rng(5));
    let mut counts = [0usize; 5];
    for d in draws {
        counts[d] += 1;
    }
    for (c, p) in counts.iter().zip(probs) {
        assert!(((*c as f64 / 1e5) - p).abs() / p < 1e-3);
    }
}

#[test]
fn pretraining_lowers_perplexity() {
    let (before, after) = support::toy_pretrain(300, 5e-3, 1);
    assert!(after < 0.5 * before, "{before} -> {after}");
}

#[test]
fn oracle_reward_raises_token_probability() {
    let p = support::toy_reinforce(60, 5e-3, 2);
    assert!(p.last().unwrap() > &(p[0] + 0.3), "{:?}", p);
}

#[test]
fn generation_avoids_specials() {
    use specforge_core::gan::{make_mask, MaskPhase, Sampling};
    let mut rng = seeded_rng(6);
    let gan = SpectreGan::new(GanConfig { hidden: 8, layers: 1, ..GanConfig::desk(12) }, &mut rng);
    let tokens: Vec<usize> = (0..20).map(|i| 6 + i % 6).collect();
    for _ in 0..30 {
        let m = make_mask(20, 0.5, MaskPhase::AdversarialBlock, &mut rng).unwrap();
        let out = gan.generate_emittable(&tokens, &m, Sampling::Temperature(5.0), &mut rng);
        assert!(out.iter().all(|&t| t >= SPECIALS.len()));
    }
}
