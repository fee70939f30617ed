//! Batch normalization over NCHW activations: per-channel statistics across
//! (batch, height, width), epsilon 1e-5, running-stat momentum 0.99.

use super::{LayerGradients, Real, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Inference,
}

/// Running mean/variance, one entry per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState<T> {
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

impl<T: Real> BnState<T> {
    pub fn new(channels: usize) -> Self {
        BnState {
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
        }
    }
}

/// Forward-pass byproducts needed by [`batchnorm_backward`]: the normalized
/// activations and the per-channel inverse standard deviation actually used.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub mode: BnMode,
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
    /// Batch statistics (train mode only); used for running-stat updates.
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

fn check_shapes<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<[usize; 4]> {
    let dims = input.dims4()?;
    let c = dims[1];
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::invalid(format!(
            "batchnorm gamma/beta shapes {:?}/{:?}, expected [{}]",
            gamma.shape(),
            beta.shape(),
            c
        )));
    }
    Ok(dims)
}

/// Train-mode normalization using batch statistics only; pure.
pub fn batchnorm_train<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let [n, c, h, w] = check_shapes(input, gamma, beta)?;
    if n < 2 {
        return Err(Error::invalid(
            "batchnorm in train mode requires batch size >= 2",
        ));
    }
    let m = T::from_f64((n * h * w) as f64);
    let plane = h * w;
    let eps = T::from_f64(BN_EPSILON);

    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut acc = T::zero();
        for b in 0..n {
            for &v in &input.data()[(b * c + ch) * plane..][..plane] {
                acc += v;
            }
        }
        mean[ch] = acc / m;
        let mut vacc = T::zero();
        for b in 0..n {
            for &v in &input.data()[(b * c + ch) * plane..][..plane] {
                let d = v - mean[ch];
                vacc += d * d;
            }
        }
        var[ch] = vacc / m;
    }

    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut x_hat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * plane;
            let (mu, is) = (mean[ch], inv_std[ch]);
            let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
            for i in 0..plane {
                let xh = (input.data()[base + i] - mu) * is;
                x_hat.data_mut()[base + i] = xh;
                out.data_mut()[base + i] = g * xh + bt;
            }
        }
    }
    Ok((
        out,
        BnCache {
            mode: BnMode::Train,
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    ))
}

/// Inference-mode normalization using the provided running statistics; pure.
pub fn batchnorm_inference<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    state: &BnState<T>,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let [n, c, h, w] = check_shapes(input, gamma, beta)?;
    if state.running_mean.shape() != [c] || state.running_var.shape() != [c] {
        return Err(Error::invalid("batchnorm running-stat shape mismatch"));
    }
    let plane = h * w;
    let eps = T::from_f64(BN_EPSILON);
    let inv_std: Vec<T> = state
        .running_var
        .data()
        .iter()
        .map(|&v| T::one() / (v + eps).sqrt())
        .collect();
    let mut x_hat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * plane;
            let (mu, is) = (state.running_mean.data()[ch], inv_std[ch]);
            let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
            for i in 0..plane {
                let xh = (input.data()[base + i] - mu) * is;
                x_hat.data_mut()[base + i] = xh;
                out.data_mut()[base + i] = g * xh + bt;
            }
        }
    }
    Ok((
        out,
        BnCache {
            mode: BnMode::Inference,
            x_hat,
            inv_std,
            batch_mean: Vec::new(),
            batch_var: Vec::new(),
        },
    ))
}

/// Spec-shaped entry point: train mode standardizes with batch statistics and
/// folds them into `state` with momentum [`BN_MOMENTUM`]; inference mode uses
/// `state` untouched.
pub fn batchnorm_forward<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mode: BnMode,
    state: &mut BnState<T>,
) -> Result<(Tensor<T>, BnCache<T>)> {
    match mode {
        BnMode::Inference => batchnorm_inference(input, gamma, beta, state),
        BnMode::Train => {
            let (out, cache) = batchnorm_train(input, gamma, beta)?;
            apply_running_update(state, &cache);
            Ok((out, cache))
        }
    }
}

/// Fold the batch statistics recorded in `cache` into the running stats.
pub fn apply_running_update<T: Real>(state: &mut BnState<T>, cache: &BnCache<T>) {
    debug_assert_eq!(cache.mode, BnMode::Train);
    let m = T::from_f64(BN_MOMENTUM);
    let im = T::one() - m;
    for (r, &b) in state
        .running_mean
        .data_mut()
        .iter_mut()
        .zip(&cache.batch_mean)
    {
        *r = m * *r + im * b;
    }
    for (r, &b) in state
        .running_var
        .data_mut()
        .iter_mut()
        .zip(&cache.batch_var)
    {
        *r = m * *r + im * b;
    }
}

/// Gradients through the normalization. Train mode accounts for the
/// dependence of the batch statistics on the input; inference mode treats
/// the running stats as constants.
pub fn batchnorm_backward<T: Real>(
    gamma: &Tensor<T>,
    cache: &BnCache<T>,
    output_grad: &Tensor<T>,
) -> Result<LayerGradients<T>> {
    if output_grad.shape() != cache.x_hat.shape() {
        return Err(Error::invalid(format!(
            "batchnorm output_grad shape {:?}, expected {:?}",
            output_grad.shape(),
            cache.x_hat.shape()
        )));
    }
    let [n, c, h, w] = cache.x_hat.dims4()?;
    let plane = h * w;
    let m = T::from_f64((n * h * w) as f64);

    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    for ch in 0..c {
        let mut dg = T::zero();
        let mut db = T::zero();
        for b in 0..n {
            let base = (b * c + ch) * plane;
            for i in 0..plane {
                let g = output_grad.data()[base + i];
                dg += g * cache.x_hat.data()[base + i];
                db += g;
            }
        }
        dgamma.data_mut()[ch] = dg;
        dbeta.data_mut()[ch] = db;
    }

    let mut input_grad = Tensor::zeros(cache.x_hat.shape());
    match cache.mode {
        BnMode::Train => {
            for ch in 0..c {
                let sum_g = dbeta.data()[ch];
                let sum_gx = dgamma.data()[ch];
                let scale = gamma.data()[ch] * cache.inv_std[ch];
                for b in 0..n {
                    let base = (b * c + ch) * plane;
                    for i in 0..plane {
                        let g = output_grad.data()[base + i];
                        let xh = cache.x_hat.data()[base + i];
                        input_grad.data_mut()[base + i] =
                            scale * (g - sum_g / m - xh * sum_gx / m);
                    }
                }
            }
        }
        BnMode::Inference => {
            for ch in 0..c {
                let scale = gamma.data()[ch] * cache.inv_std[ch];
                for b in 0..n {
                    let base = (b * c + ch) * plane;
                    for i in 0..plane {
                        input_grad.data_mut()[base + i] = scale * output_grad.data()[base + i];
                    }
                }
            }
        }
    }

    Ok(LayerGradients {
        input_grad,
        param_grads: vec![("gamma", dgamma), ("beta", dbeta)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn batch_of_one_in_train_mode_is_invalid() {
        let input = Tensor::<f64>::zeros(&[1, 2, 3, 3]);
        let gamma = Tensor::filled(&[2], 1.0);
        let beta = Tensor::zeros(&[2]);
        assert!(batchnorm_train(&input, &gamma, &beta).is_err());
    }

    #[test]
    fn train_output_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let input = rand_tensor(&mut rng, &[4, 3, 6, 6]);
        let gamma = Tensor::filled(&[3], 1.0);
        let beta = Tensor::zeros(&[3]);
        let (out, _) = batchnorm_train(&input, &gamma, &beta).unwrap();
        let plane = 36;
        for ch in 0..3 {
            let mut mean = 0.0;
            let mut var = 0.0;
            let m = (4 * plane) as f64;
            for b in 0..4 {
                for &v in &out.data()[(b * 3 + ch) * plane..][..plane] {
                    mean += v;
                }
            }
            mean /= m;
            for b in 0..4 {
                for &v in &out.data()[(b * 3 + ch) * plane..][..plane] {
                    var += (v - mean) * (v - mean);
                }
            }
            var /= m;
            assert!(mean.abs() < 1e-5, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "channel {ch} var {var}");
        }
    }

    #[test]
    fn inference_with_unit_stats_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let input = rand_tensor(&mut rng, &[2, 2, 4, 4]);
        let gamma = Tensor::filled(&[2], 1.0);
        let beta = Tensor::zeros(&[2]);
        let state = BnState::new(2);
        let (out, _) = batchnorm_inference(&input, &gamma, &beta, &state).unwrap();
        for (a, b) in out.data().iter().zip(input.data()) {
            // epsilon makes the scale 1/sqrt(1 + 1e-5)
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn running_stats_update_with_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let input = rand_tensor(&mut rng, &[4, 1, 4, 4]);
        let gamma = Tensor::filled(&[1], 1.0);
        let beta = Tensor::zeros(&[1]);
        let mut state = BnState::new(1);
        let (_, cache) = batchnorm_forward(&input, &gamma, &beta, BnMode::Train, &mut state).unwrap();
        let expect_mean = 0.99 * 0.0 + 0.01 * cache.batch_mean[0];
        let expect_var = 0.99 * 1.0 + 0.01 * cache.batch_var[0];
        assert!((state.running_mean.data()[0] - expect_mean).abs() < 1e-12);
        assert!((state.running_var.data()[0] - expect_var).abs() < 1e-12);
    }

    /// Central differences through the full train-mode normalization,
    /// including the dependence of batch statistics on the input.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let input = rand_tensor(&mut rng, &[3, 2, 4, 4]);
        let gamma = rand_tensor(&mut rng, &[2]).map(|v| v + 3.0); // keep away from 0
        let beta = rand_tensor(&mut rng, &[2]);
        let probe = rand_tensor(&mut rng, &[3, 2, 4, 4]);
        let loss = |i: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            let (out, _) = batchnorm_train(i, g, b).unwrap();
            out.data()
                .iter()
                .zip(probe.data())
                .map(|(o, p)| o * p)
                .sum()
        };
        let (_, cache) = batchnorm_train(&input, &gamma, &beta).unwrap();
        let grads = batchnorm_backward(&gamma, &cache, &probe).unwrap();

        let step = 1e-3;
        let mut max_rel: f64 = 0.0;
        for idx in 0..input.len() {
            let mut p = input.clone();
            let mut m = input.clone();
            p.data_mut()[idx] += step;
            m.data_mut()[idx] -= step;
            let num = (loss(&p, &gamma, &beta) - loss(&m, &gamma, &beta)) / (2.0 * step);
            let a = grads.input_grad.data()[idx];
            let rel = (a - num).abs() / (a.abs() + num.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        for idx in 0..2 {
            let mut p = gamma.clone();
            let mut m = gamma.clone();
            p.data_mut()[idx] += step;
            m.data_mut()[idx] -= step;
            let num = (loss(&input, &p, &beta) - loss(&input, &m, &beta)) / (2.0 * step);
            let a = grads.param_grad("gamma").unwrap().data()[idx];
            let rel = (a - num).abs() / (a.abs() + num.abs()).max(1e-8);
            max_rel = max_rel.max(rel);

            let mut pb = beta.clone();
            let mut mb = beta.clone();
            pb.data_mut()[idx] += step;
            mb.data_mut()[idx] -= step;
            let numb = (loss(&input, &gamma, &pb) - loss(&input, &gamma, &mb)) / (2.0 * step);
            let ab = grads.param_grad("beta").unwrap().data()[idx];
            let relb = (ab - numb).abs() / (ab.abs() + numb.abs()).max(1e-8);
            max_rel = max_rel.max(relb);
        }
        assert!(max_rel < 1e-4, "max rel err {max_rel}");
    }
}
