use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor;
use crate::Rng;

/// Recurrent weight range.
pub const LSTM_INIT: f64 = 0.08;
/// Transformer weight standard deviation.
pub const TRANSFORMER_STD: f64 = 0.02;

pub fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-limit..=limit))
}

/// Normal(0, std²) resampled until within two standard deviations.
pub fn truncated_normal(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Tensor {
    let n = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(rows, cols, |_, _| loop {
        let x: f64 = n.sample(rng);
        if x.abs() <= 2.0 * std {
            break x;
        }
    })
}
