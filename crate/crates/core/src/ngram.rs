//! Distinct n-gram counts across base, fuzzed and generated corpora.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_N: usize = 2;
pub const MAX_N: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NgramError {
    #[error("n = {0} is outside {MIN_N}..={MAX_N}")]
    Order(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityStat {
    pub n: usize,
    /// Distinct n-grams in the base corpus.
    pub base: usize,
    /// Distinct n-grams in the fuzzed corpus not seen in the base corpus.
    pub fuzzing: usize,
    /// Distinct n-grams in the generated corpus not seen in either.
    pub gan: usize,
    pub total: usize,
    /// `(base + fuzzing) / base`.
    pub fuzzing_factor: f64,
    /// `total / base`.
    pub total_factor: f64,
}

fn grams<'a>(corpus: &'a [Vec<String>], n: usize, into: &mut BTreeSet<&'a [String]>) {
    for seq in corpus {
        if seq.len() >= n {
            into.extend(seq.windows(n));
        }
    }
}

/// Distinct n-grams contributed by each corpus in the order base, fuzzing,
/// generated. Each sequence is a list of normalized token texts; n-grams
/// never span sequences.
pub fn ngram_diversity(
    base: &[Vec<String>],
    fuzz: &[Vec<String>],
    gan: &[Vec<String>],
    n: usize,
) -> Result<DiversityStat, NgramError> {
    if !(MIN_N..=MAX_N).contains(&n) {
        return Err(NgramError::Order(n));
    }
    let mut seen = BTreeSet::new();
    grams(base, n, &mut seen);
    let b = seen.len();
    grams(fuzz, n, &mut seen);
    let f = seen.len() - b;
    grams(gan, n, &mut seen);
    let g = seen.len() - b - f;
    let factor = |x: usize| if b == 0 { 0.0 } else { x as f64 / b as f64 };
    Ok(DiversityStat {
        n,
        base: b,
        fuzzing: f,
        gan: g,
        total: seen.len(),
        fuzzing_factor: factor(b + f),
        total_factor: factor(seen.len()),
    })
}
