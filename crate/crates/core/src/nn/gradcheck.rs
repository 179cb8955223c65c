use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::params::{Gradients, ParamId, ParamStore};

/// Default finite-difference step.
pub const EPSILON: f64 = 1e-5;
/// Denominator floor for the relative error, so that gradients that are
/// zero up to rounding do not blow the ratio up.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst element.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `loss`'s reverse-mode gradients against central differences for
/// every element of every parameter in `store`.
pub fn grad_check(
    store: &mut ParamStore,
    loss: impl FnMut(&ParamStore) -> (f64, Gradients),
    eps: f64,
) -> GradCheckReport {
    let ids: Vec<ParamId> = store.ids().collect();
    grad_check_params(store, &ids, loss, eps)
}

/// [`grad_check`] restricted to the parameters in `ids`.
pub fn grad_check_params(
    store: &mut ParamStore,
    ids: &[ParamId],
    mut loss: impl FnMut(&ParamStore) -> (f64, Gradients),
    eps: f64,
) -> GradCheckReport {
    let (_, grads) = loss(store);
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: None, checked: 0 };
    for &id in ids {
        let analytic = grads.get_or_zero(id, store);
        for k in 0..analytic.len() {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + eps;
            let (plus, _) = loss(store);
            store.get_mut(id).data_mut()[k] = orig - eps;
            let (minus, _) = loss(store);
            store.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let e = rel_err(analytic.data()[k], numeric, REL_FLOOR);
            report.checked += 1;
            if e > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(e);
                report.worst = Some((store.name(id).to_string(), k));
            }
        }
    }
    report
}
