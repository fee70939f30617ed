//! Central-difference gradient checking harness.

use super::{Real, Tensor};

/// Compare analytic gradients against central differences of `f` over every
/// entry of every tensor in `params`, returning the worst relative error
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
///
/// `f` must be a pure function of `params`; entries are perturbed in place
/// and restored after each evaluation.
pub fn grad_check<T: Real>(
    mut f: impl FnMut(&[Tensor<T>]) -> T,
    params: &mut [Tensor<T>],
    analytic: &[Tensor<T>],
    step: T,
) -> T {
    assert_eq!(params.len(), analytic.len());
    let floor = T::from_f64(1e-8);
    let two = T::from_f64(2.0);
    let mut max_rel = T::zero();
    for p in 0..params.len() {
        assert_eq!(params[p].shape(), analytic[p].shape());
        for i in 0..params[p].len() {
            let orig = params[p].data()[i];
            params[p].data_mut()[i] = orig + step;
            let fp = f(params);
            params[p].data_mut()[i] = orig - step;
            let fm = f(params);
            params[p].data_mut()[i] = orig;
            let numeric = (fp - fm) / (two * step);
            let a = analytic[p].data()[i];
            let rel = (a - numeric).abs() / floor.max(a.abs() + numeric.abs());
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    max_rel
}
