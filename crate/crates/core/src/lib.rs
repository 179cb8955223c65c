//! Spectre-V1 gadget corpus generation and detection.
//!
//! This crate holds the algorithmic parts of the toolkit and builds without
//! `std`: the AT&T assembly lexer, the mutational fuzzer, a small reverse-mode
//! autodiff engine, the masked seq2seq GAN, the transformer detector with its
//! sliding-window scanner, and the evaluation metrics. Process spawning, file
//! formats on disk and the command line live in the `specforge` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bert;
pub mod dataset;
pub mod fuzz;
pub mod gan;
pub mod lexer;
pub mod metrics;
pub mod ngram;
pub mod nn;
pub mod verify;
pub mod vocab;

mod fmath;

pub use lexer::{Token, TokenKind, TokenSeq};
pub use vocab::Vocabulary;

/// Deterministic RNG used everywhere a seed is accepted.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Derives an independent stream for worker `index` from a base seed.
pub fn worker_rng(seed: u64, index: u64) -> Rng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}
