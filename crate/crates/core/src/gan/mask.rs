use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmath;
use crate::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPhase {
    /// Scattered positions, used in maximum-likelihood pre-training.
    PretrainRandom,
    /// One contiguous run, used in adversarial training.
    AdversarialBlock,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskVector {
    pub bits: Vec<bool>,
    pub phase: MaskPhase,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("sequence of length {0} is too short to mask (need at least 2)")]
    TooShort(usize),
    #[error("masking rate {0} outside (0, 1)")]
    Rate(f64),
}

impl MaskVector {
    pub fn none(n: usize) -> Self {
        MaskVector { bits: vec![false; n], phase: MaskPhase::PretrainRandom }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn rate(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.bits.len() as f64
        }
    }

    /// Masked positions form a single run (vacuously true when empty).
    pub fn is_contiguous(&self) -> bool {
        let first = self.bits.iter().position(|&b| b);
        let last = self.bits.iter().rposition(|&b| b);
        match (first, last) {
            (Some(a), Some(b)) => self.bits[a..=b].iter().all(|&x| x),
            _ => true,
        }
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// `1.0` at masked positions, `0.0` elsewhere.
    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Number of masked positions for a length-`n` sequence at rate `r_m`:
/// `round(r_m · n)` clamped to `1..=n-1`, so the realized rate is within
/// `1/n` of `r_m` and the first position can stay unmasked.
pub fn mask_len(n: usize, r_m: f64) -> usize {
    let k = fmath::round(r_m * n as f64) as usize;
    k.clamp(1, n - 1)
}

/// Draws a mask. Position 0 is never masked.
pub fn make_mask(n: usize, r_m: f64, phase: MaskPhase, rng: &mut Rng) -> Result<MaskVector, MaskError> {
    if n < 2 {
        return Err(MaskError::TooShort(n));
    }
    if !(r_m > 0.0 && r_m < 1.0) {
        return Err(MaskError::Rate(r_m));
    }
    let k = mask_len(n, r_m);
    let mut bits = vec![false; n];
    match phase {
        MaskPhase::PretrainRandom => {
            for i in index::sample(rng, n - 1, k) {
                bits[i + 1] = true;
            }
        }
        MaskPhase::AdversarialBlock => {
            let start = rng.gen_range(1..=n - k);
            bits[start..start + k].iter_mut().for_each(|b| *b = true);
        }
    }
    Ok(MaskVector { bits, phase })
}
