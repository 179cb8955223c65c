//! Synthetic detector corpora built from the bundled assembly.

use std::path::Path;

use rand::Rng as _;
use specforge_core::fuzz::{mutate_function, InsertionOptions, InsertionTables, MutationParams};
use specforge_core::{worker_rng, TokenSeq};

use crate::corpus::{base_gadgets, benign_functions};
use crate::error::{Error, Result};
use crate::stages::{balanced_split, Split};

/// `count` fuzzed variants of `bases`, cycling through the bases, each with
/// 1..=`max_offset` inserted instructions.
pub fn fuzzed_gadgets(bases: &[TokenSeq], count: usize, max_offset: usize, seed: u64) -> Vec<TokenSeq> {
    let tables = InsertionTables::builtin();
    let params = MutationParams { diversity: 1, max_offset: Some(max_offset.max(1)), rng_seed: seed };
    (0..count)
        .map(|i| {
            let base = &bases[i % bases.len()];
            let m = mutate_function(base, &params, &tables, InsertionOptions::default()).expect("non-empty base");
            let offset = worker_rng(seed, i as u64).gen_range(1..=max_offset.max(1));
            let rec = m.mutant(offset, (i / bases.len()) as u32);
            TokenSeq::new(rec.id, rec.tokens.tokens)
        })
        .collect()
}

/// Disjoint train/test sets of fuzzed gadgets (up to five insertions each)
/// and bundled benign functions, `train` and `test` of each class.
pub fn synthetic_split(data: &Path, train: usize, test: usize, seed: u64) -> Result<Split> {
    let gadgets = fuzzed_gadgets(&base_gadgets(data)?, train + test, 5, seed);
    let benign = benign_functions(data)?;
    if benign.len() < train + test {
        return Err(Error::Data(format!("need {} benign functions, have {}", train + test, benign.len())));
    }
    balanced_split(&gadgets, &benign, train, test, seed)
}
