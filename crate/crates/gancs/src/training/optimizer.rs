//! Bias-corrected Adam and the halving learning-rate schedule.

use crate::error::{Error, Result};
use crate::networks::ParamSet;
use crate::numerics::Real;

/// One Adam update over every learnable parameter, consuming the gradient
/// buffers. `t` is the 1-based step count of this parameter set.
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: usize,
) -> Result<()> {
    if t == 0 {
        return Err(Error::invalid("Adam step count is 1-based"));
    }
    let b1 = T::from_f64(beta1);
    let b2 = T::from_f64(beta2);
    let one = T::one();
    let corr1 = T::from_f64(1.0 - beta1.powi(t as i32));
    let corr2 = T::from_f64(1.0 - beta2.powi(t as i32));
    let lr_t = T::from_f64(lr);
    let eps_t = T::from_f64(eps);
    for p in params.iter_mut() {
        if !p.learnable {
            continue;
        }
        for i in 0..p.value.len() {
            let g = p.grad.data()[i];
            let m = b1 * p.adam_m.data()[i] + (one - b1) * g;
            let v = b2 * p.adam_v.data()[i] + (one - b2) * g * g;
            p.adam_m.data_mut()[i] = m;
            p.adam_v.data_mut()[i] = v;
            let m_hat = m / corr1;
            let v_hat = v / corr2;
            p.value.data_mut()[i] = p.value.data()[i] - lr_t * m_hat / (v_hat.sqrt() + eps_t);
        }
    }
    Ok(())
}

/// Learning rate halved every `halve_every` iterations: at 1-based
/// iteration `t` the factor is `0.5^(t / halve_every)`.
pub fn effective_lr(base: f64, halve_every: usize, iteration: usize) -> f64 {
    base * 0.5f64.powi((iteration / halve_every) as i32)
}
