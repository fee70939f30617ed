//! Pointwise activations and the per-sample spatial mean reduction.

use super::{Real, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Subgradient at exactly 0 is 0.
pub fn relu_backward<T: Real>(input: &Tensor<T>, output_grad: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != output_grad.shape() {
        return Err(Error::invalid("relu_backward shape mismatch"));
    }
    let data = input
        .data()
        .iter()
        .zip(output_grad.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Numerically stable logistic: never overflows for finite inputs.
pub fn sigmoid<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| {
        if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        }
    })
}

/// Takes the forward *output* so the derivative is just `y * (1 - y)`.
pub fn sigmoid_backward<T: Real>(output: &Tensor<T>, output_grad: &Tensor<T>) -> Result<Tensor<T>> {
    if output.shape() != output_grad.shape() {
        return Err(Error::invalid("sigmoid_backward shape mismatch"));
    }
    let data = output
        .data()
        .iter()
        .zip(output_grad.data())
        .map(|(&y, &g)| g * y * (T::one() - y))
        .collect();
    Tensor::from_vec(output.shape(), data)
}

/// Mean over channels and space, one scalar per sample: `[N,C,H,W] -> [N]`.
pub fn spatial_mean<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.dims4()?;
    let per = c * h * w;
    let m = T::from_f64(per as f64);
    let mut out = Tensor::zeros(&[n]);
    for b in 0..n {
        let mut acc = T::zero();
        for &v in &input.data()[b * per..][..per] {
            acc += v;
        }
        out.data_mut()[b] = acc / m;
    }
    Ok(out)
}

pub fn spatial_mean_backward<T: Real>(
    input_shape: &[usize],
    output_grad: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, per) = match input_shape {
        &[n, c, h, w] => (n, c * h * w),
        s => return Err(Error::invalid(format!("expected rank-4 shape, got {s:?}"))),
    };
    if output_grad.shape() != [n] {
        return Err(Error::invalid("spatial_mean_backward grad shape mismatch"));
    }
    let m = T::from_f64(per as f64);
    let mut out = Tensor::zeros(input_shape);
    for b in 0..n {
        let g = output_grad.data()[b] / m;
        for v in &mut out.data_mut()[b * per..][..per] {
            *v = g;
        }
    }
    Ok(out)
}
