use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::fmath;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Rule {
    pub const ADAM: Rule = Rule::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
}

/// First-order optimizer with per-parameter moment state.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub rule: Rule,
    pub lr: f64,
    step: u64,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
}

impl Optimizer {
    pub fn new(rule: Rule, lr: f64) -> Self {
        Optimizer { rule, lr, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(Rule::ADAM, lr)
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(Rule::Sgd, lr)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters without a gradient are left alone.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        for (id, g) in grads.iter() {
            let p = store.get_mut(id);
            match self.rule {
                Rule::Sgd => {
                    for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= self.lr * d;
                    }
                }
                Rule::Adam { beta1, beta2, eps } => {
                    let [r, c] = p.shape();
                    let m = self.m[id.index()].get_or_insert_with(|| Tensor::zeros(r, c));
                    let v = self.v[id.index()].get_or_insert_with(|| Tensor::zeros(r, c));
                    let bc1 = 1.0 - fmath::powi(beta1, self.step as i32);
                    let bc2 = 1.0 - fmath::powi(beta2, self.step as i32);
                    for (((w, &d), mi), vi) in
                        p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * d;
                        *vi = beta2 * *vi + (1.0 - beta2) * d * d;
                        let mh = *mi / bc1;
                        let vh = *vi / bc2;
                        *w -= self.lr * mh / (fmath::sqrt(vh) + eps);
                    }
                }
            }
        }
    }
}
