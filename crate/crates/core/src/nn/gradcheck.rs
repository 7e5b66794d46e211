use alloc::string::String;
use alloc::vec::Vec;

use super::ParamStore;
use crate::math::abs;

/// Anything that owns a [`ParamStore`].
pub trait Parameterized {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
}

impl Parameterized for ParamStore {
    fn params(&self) -> &ParamStore {
        self
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Slot name and flat index of the worst parameter.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-2)`.
///
/// The floor stops gradients that are zero up to roundoff from reporting
/// huge relative errors.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    abs(analytic - numeric) / abs(analytic).max(abs(numeric)).max(1e-2)
}

/// Compares analytic gradients against central differences
/// `(f(p+ε) − f(p−ε)) / 2ε` over every scalar parameter.
///
/// `loss_and_grad` must zero the gradients, evaluate the loss, and leave the
/// analytic gradient in the store. It must be deterministic.
pub fn gradcheck<T, F>(target: &mut T, eps: f64, mut loss_and_grad: F) -> GradCheckReport
where
    T: Parameterized + ?Sized,
    F: FnMut(&mut T) -> f64,
{
    loss_and_grad(target);
    let analytic: Vec<Vec<f64>> = target
        .params()
        .slots()
        .iter()
        .map(|s| s.grad.as_slice().to_vec())
        .collect();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (slot, grads) in analytic.iter().enumerate() {
        for (idx, &a) in grads.iter().enumerate() {
            let orig = *target.params_mut().scalar_mut(slot, idx);
            *target.params_mut().scalar_mut(slot, idx) = orig + eps;
            let plus = loss_and_grad(target);
            *target.params_mut().scalar_mut(slot, idx) = orig - eps;
            let minus = loss_and_grad(target);
            *target.params_mut().scalar_mut(slot, idx) = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((target.params().slots()[slot].name.clone(), idx));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    // leave the analytic gradient at the unperturbed point in place
    loss_and_grad(target);
    report
}
