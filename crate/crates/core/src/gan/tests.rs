use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::nn::Graph;
use crate::seeded_rng;

fn tiny(vocab: usize) -> GanConfig {
    GanConfig { hidden: 6, ..GanConfig::desk(vocab) }
}

#[test]
fn returns_hand_cases() {
    let r = discounted_returns(&[-1.0, -2.0], &[true, true], 0.89);
    assert_eq!(r[0], -1.0 + 0.89 * -2.0);
    // -2.78 itself is not representable; the f64 result is one ulp away.
    assert!((r[0] - -2.78).abs() <= f64::EPSILON * 2.78);
    assert_eq!(r[1], -2.0);
    let r = discounted_returns(&[0.0, -0.7, 0.0], &[false, true, false], 0.0);
    assert_eq!(r[1], -0.7);
    let rewards = [-0.3, -1.1, -0.2, -0.9, -0.05];
    let mask = [false, true, true, false, true];
    let r = discounted_returns(&rewards, &mask, 0.89);
    for t in 0..4 {
        if mask[t] {
            assert_eq!(r[t], rewards[t] + 0.89 * r[t + 1]);
        }
    }
}

#[test]
fn generate_copies_unmasked() {
    let mut rng = seeded_rng(1);
    let gan = SpectreGan::new(tiny(12), &mut rng);
    let toks: Vec<usize> = (0..9).map(|i| 6 + i % 6).collect();
    assert_eq!(gan.generate(&toks, &MaskVector::none(9), Sampling::default(), &mut rng), toks);
    let m = make_mask(9, 0.4, MaskPhase::PretrainRandom, &mut rng).unwrap();
    for _ in 0..5 {
        let out = gan.generate(&toks, &m, Sampling::default(), &mut rng);
        for t in 0..9 {
            if !m.bits[t] {
                assert_eq!(out[t], toks[t]);
            }
        }
    }
}

#[test]
fn stepwise_generation_matches_teacher_forcing() {
    let mut rng = seeded_rng(2);
    let gan = SpectreGan::new(tiny(10), &mut rng);
    let toks: Vec<usize> = vec![6, 7, 8, 9, 6, 7, 8, 9];
    let m = make_mask(8, 0.5, MaskPhase::AdversarialBlock, &mut rng).unwrap();
    let out = gan.generate(&toks, &m, Sampling::Argmax, &mut rng);
    let mut g = Graph::new(&gan.store);
    let logits = gan.gen.logits(&mut g, &apply_mask(&toks, &m), &out);
    let lv = g.value(logits);
    for t in m.positions() {
        let row = lv.row_slice(t);
        let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
        assert_eq!(best, out[t]);
    }
}

#[test]
fn untrained_outputs() {
    let mut rng = seeded_rng(3);
    let v = 40;
    let gan = SpectreGan::new(tiny(v), &mut rng);
    let toks: Vec<usize> = (0..12).map(|i| 6 + (i * 7) % 30).collect();
    let m = make_mask(12, 0.3, MaskPhase::PretrainRandom, &mut rng).unwrap();
    let pd = gan.score_discriminator(&apply_mask(&toks, &m), &toks);
    let pc = gan.score_critic(&toks);
    for p in pd.iter().chain(&pc) {
        assert!(*p > 0.3 && *p < 0.7);
    }
    let ex = Example::new(toks, m).unwrap();
    let (nll, _) = generator_nll(&gan, &[ex.clone()]).unwrap();
    assert!((nll - (v as f64).ln()).abs() < 0.05, "{nll}");
    let ppl = perplexity(&gan, &[ex]).unwrap();
    assert!((ppl / v as f64 - 1.0).abs() < 0.05);
}

#[test]
fn empty_and_unmasked_batches() {
    let mut rng = seeded_rng(4);
    let gan = SpectreGan::new(tiny(8), &mut rng);
    assert_eq!(perplexity(&gan, &[]), Err(GanError::EmptyCorpus));
    let ex = Example::new(vec![6, 7, 6], MaskVector::none(3)).unwrap();
    assert_eq!(generator_nll(&gan, &[ex.clone()]).unwrap_err(), GanError::NoMaskedTokens);
    let mut gan = gan;
    let mut opts = GanOptimizers::adam(&gan.config);
    let before = gan.store.clone();
    let l = adversarial_step(&mut gan, &mut opts, &[ex], &RewardSource::Discriminator, Sampling::default(), &mut rng);
    assert!(l.d_only);
    for (id, name, t) in gan.store.iter() {
        if !SpectreGan::owns(name, "disc") {
            assert_eq!(t, before.get(id), "{name}");
        }
    }
    assert!(Example::new(vec![1, 2], MaskVector::none(3)).is_err());
}

#[test]
fn stratified_sampler_counts() {
    let mut rng = seeded_rng(5);
    let probs = [0.2, 0.5, 0.3];
    let xs = stratified_categorical(&probs, 1000, &mut rng);
    for (k, p) in probs.iter().enumerate() {
        let c = xs.iter().filter(|&&x| x == k).count() as f64;
        assert!((c - p * 1000.0).abs() <= 1.0);
    }
}
