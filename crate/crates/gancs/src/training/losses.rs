//! The two adversarial objectives with exact gradients.

use num_complex::Complex64;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::kspace::{self, ComplexImage, KSpaceData, SamplingMask};
use crate::networks::{complex_to_sample, sample_to_complex, Discriminator, Generator, ParamSet};
use crate::numerics::{BnMode, Real, Tensor};

/// Discriminator loss components: `real = E[(1 - D(x))^2]`,
/// `fake = E[D(x_hat)^2]`; the total is their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DLossParts {
    pub real: f64,
    pub fake: f64,
}

impl DLossParts {
    pub fn total(&self) -> f64 {
        self.real + self.fake
    }
}

/// Generator loss components (raw, unweighted); `total` recombines them
/// with the mode weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GLossParts {
    pub gan: f64,
    pub pixel: f64,
    pub data_consistency: f64,
    pub total: f64,
}

/// Least-squares discriminator cost over a real and a (detached) generated
/// batch. Gradients are written into `d_params`' buffers (zeroed first);
/// running statistics are folded in afterwards, real pass then fake pass.
pub fn d_loss<T: Real>(
    disc: &Discriminator,
    d_params: &mut ParamSet<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
) -> Result<DLossParts> {
    let [n, ..] = real.dims4()?;
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if real.shape() != fake.shape() {
        return Err(Error::invalid("real/fake batch shape mismatch"));
    }
    d_params.zero_grads();
    let inv_n = 1.0 / n as f64;

    let fwd_real = disc.forward(d_params, real, BnMode::Train)?;
    let mut loss_real = 0.0;
    let grad_real = Tensor::from_vec(
        &[n],
        fwd_real
            .scores
            .data()
            .iter()
            .map(|&s| {
                let s = s.to_f64();
                loss_real += (1.0 - s) * (1.0 - s) * inv_n;
                T::from_f64(2.0 * (s - 1.0) * inv_n)
            })
            .collect(),
    )?;
    disc.backward(d_params, &fwd_real, &grad_real, true)?;

    let fwd_fake = disc.forward(d_params, fake, BnMode::Train)?;
    let mut loss_fake = 0.0;
    let grad_fake = Tensor::from_vec(
        &[n],
        fwd_fake
            .scores
            .data()
            .iter()
            .map(|&s| {
                let s = s.to_f64();
                loss_fake += s * s * inv_n;
                T::from_f64(2.0 * s * inv_n)
            })
            .collect(),
    )?;
    disc.backward(d_params, &fwd_fake, &grad_fake, true)?;

    disc.commit_running_stats(d_params, &fwd_real)?;
    disc.commit_running_stats(d_params, &fwd_fake)?;
    Ok(DLossParts {
        real: loss_real,
        fake: loss_fake,
    })
}

/// Data-consistency residual `y - Phi(out)` per sample; returns the summed
/// squared norm and accumulates `2/N * Phi^H(Phi out - y)` into `grad`
/// scaled by `weight`.
fn data_consistency_term<T: Real>(
    out: &Tensor<T>,
    ys: &[KSpaceData],
    mask: &SamplingMask,
    weight: f64,
    grad: Option<&mut Tensor<T>>,
) -> Result<f64> {
    let [n, _, h, w] = out.dims4()?;
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad = grad;
    for s in 0..n {
        let img = ComplexImage::from_complex(h, w, sample_to_complex(out, s))?;
        let k = kspace::forward(&img, mask)?;
        let resid: Vec<Complex64> = k
            .complex()
            .iter()
            .zip(ys[s].complex())
            .map(|(a, b)| a - b)
            .collect();
        value += resid.iter().map(|v| v.norm_sqr()).sum::<f64>() * inv_n;
        if let Some(g) = grad.as_deref_mut() {
            let resid_k = KSpaceData::from_masked_data(h, w, resid, mask)?;
            let back = kspace::adjoint(&resid_k, mask)?;
            let scale = 2.0 * weight * inv_n;
            let plane = h * w;
            let base = s * 2 * plane;
            for (i, v) in back.complex().iter().enumerate() {
                g.data_mut()[base + i] += T::from_f64(scale * v.re);
                g.data_mut()[base + plane + i] += T::from_f64(scale * v.im);
            }
        }
    }
    Ok(value)
}

/// Mixed generator cost. The forward pass (and any projections) follow the
/// generator's own config; which loss terms are active comes from
/// `cfg.loss_mode` with weights `cfg.lambda`/`cfg.eta`. Gradients land in
/// `g_params` only; the discriminator, when present, is treated as a frozen
/// function of its input.
pub fn g_loss<T: Real>(
    gen: &Generator,
    g_params: &mut ParamSet<T>,
    disc: Option<(&Discriminator, &mut ParamSet<T>)>,
    target: &Tensor<T>,
    x_tilde: &Tensor<T>,
    ys: &[KSpaceData],
    mask: &SamplingMask,
    cfg: &TrainConfig,
) -> Result<GLossParts> {
    let [n, ..] = target.dims4()?;
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if target.shape() != x_tilde.shape() {
        return Err(Error::invalid("target/input batch shape mismatch"));
    }
    let (w_dc, w_pix, pixel_sq, w_gan) = cfg.loss_mode.weights(cfg.lambda, cfg.eta);
    if w_gan > 0.0 && disc.is_none() {
        return Err(Error::invalid(
            "adversarial weight is positive but no discriminator parameters were supplied",
        ));
    }

    g_params.zero_grads();
    let needs_dc_inputs = gen.config().num_dc_blocks > 0;
    let fwd = gen.forward(
        g_params,
        x_tilde,
        if needs_dc_inputs { Some(ys) } else { None },
        if needs_dc_inputs { Some(mask) } else { None },
        BnMode::Train,
    )?;
    let out = &fwd.output;
    let inv_n = 1.0 / n as f64;
    let mut out_grad = Tensor::zeros(out.shape());

    // pixel term: L1 with sign subgradient (0 at 0), or squared L2
    let mut pixel = 0.0;
    for (i, (&o, &t)) in out.data().iter().zip(target.data()).enumerate() {
        let diff = (o - t).to_f64();
        if pixel_sq {
            pixel += diff * diff * inv_n;
            out_grad.data_mut()[i] += T::from_f64(2.0 * diff * w_pix * inv_n);
        } else {
            pixel += diff.abs() * inv_n;
            let sgn = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            out_grad.data_mut()[i] += T::from_f64(sgn * w_pix * inv_n);
        }
    }

    // data-consistency term (value always logged; gradient only when active)
    let data_consistency = data_consistency_term(
        out,
        ys,
        mask,
        w_dc,
        if w_dc > 0.0 { Some(&mut out_grad) } else { None },
    )?;

    // adversarial term (1 - D(out))^2 with D frozen
    let mut gan = 0.0;
    if let Some((disc, d_params)) = disc {
        if w_gan > 0.0 {
            let dfwd = disc.forward(d_params, out, BnMode::Train)?;
            let score_grad = Tensor::from_vec(
                &[n],
                dfwd.scores
                    .data()
                    .iter()
                    .map(|&s| {
                        let s = s.to_f64();
                        gan += (1.0 - s) * (1.0 - s) * inv_n;
                        T::from_f64(2.0 * (s - 1.0) * w_gan * inv_n)
                    })
                    .collect(),
            )?;
            let input_grad = disc.backward(d_params, &dfwd, &score_grad, false)?;
            out_grad.add_assign(&input_grad)?;
        }
    }

    gen.backward(
        g_params,
        &fwd,
        &out_grad,
        if needs_dc_inputs { Some(mask) } else { None },
    )?;
    gen.commit_running_stats(g_params, &fwd)?;

    Ok(GLossParts {
        gan,
        pixel,
        data_consistency,
        total: w_dc * data_consistency + w_pix * pixel + w_gan * gan,
    })
}
