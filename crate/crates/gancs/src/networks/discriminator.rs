//! Strided CNN scorer: conv/BN/ReLU stack whose last layer is linear and
//! spatially averaged into one decision variable per sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::generator::{add_bn, he_conv_kernel};
use super::{DiscriminatorConfig, ParamSet};
use crate::error::{Error, Result};
use crate::numerics::{
    apply_running_update, batchnorm_backward, batchnorm_inference, batchnorm_train,
    conv2d_backward, conv2d_forward, conv_output_geometry, relu, relu_backward, spatial_mean,
    spatial_mean_backward, BnCache, BnMode, BnState, Padding, Real, Tensor,
};

#[derive(Debug, Clone)]
pub struct DiscLayer {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub ksize: usize,
    pub stride: usize,
    pub bn: bool,
    pub relu: bool,
}

struct LayerTrace<T> {
    conv_input: Tensor<T>,
    bn_cache: Option<BnCache<T>>,
    relu_input: Option<Tensor<T>>,
}

/// Forward-pass record for the discriminator.
pub struct DiscForward<T> {
    pub scores: Tensor<T>,
    layers: Vec<LayerTrace<T>>,
    final_shape: Vec<usize>,
}

impl<T: Real> DiscForward<T> {
    /// Smallest |pre-activation| seen by any ReLU in this pass; see
    /// `GenForward::min_relu_margin`.
    pub fn min_relu_margin(&self) -> T {
        let mut m = T::infinity();
        for trace in &self.layers {
            if let Some(input) = &trace.relu_input {
                for &v in input.data() {
                    m = m.min(v.abs());
                }
            }
        }
        m
    }
}

pub struct Discriminator {
    cfg: DiscriminatorConfig,
    layers: Vec<DiscLayer>,
}

impl Discriminator {
    /// Layer plan: 3x3 kernels except the last two layers (1x1); stride 2 on
    /// the first `stride2_layers` with feature maps doubling from
    /// `base_feature_maps`; BN + ReLU everywhere except the final linear
    /// layer, whose output is spatially averaged into the score.
    pub fn new(cfg: DiscriminatorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(cfg.num_layers);
        let mut in_ch = 2;
        for i in 1..=cfg.num_layers {
            let last = i == cfg.num_layers;
            let ksize = if i + 2 > cfg.num_layers { 1 } else { 3 };
            let stride = if i <= cfg.stride2_layers { 2 } else { 1 };
            let out_ch = if last {
                1
            } else if i <= cfg.stride2_layers {
                cfg.base_feature_maps << (i - 1)
            } else {
                cfg.base_feature_maps << cfg.stride2_layers.saturating_sub(1)
            };
            layers.push(DiscLayer {
                name: format!("layer{i}"),
                in_ch,
                out_ch,
                ksize,
                stride,
                bn: !last,
                relu: !last,
            });
            in_ch = out_ch;
        }
        Ok(Discriminator { cfg, layers })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &[DiscLayer] {
        &self.layers
    }

    /// Spatial dims after each layer for a given input size.
    pub fn layer_output_dims(&self, h: usize, w: usize) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.layers.len());
        let (mut ch, mut cw) = (h, w);
        for l in &self.layers {
            let (oh, ow) = conv_output_geometry(ch, cw, l.ksize, l.ksize, l.stride, Padding::Same);
            dims.push((oh, ow));
            ch = oh;
            cw = ow;
        }
        dims
    }

    pub fn init_params<T: Real>(&self, seed: u64) -> ParamSet<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        for l in &self.layers {
            ps.add(
                format!("{}.kernel", l.name),
                he_conv_kernel(&mut rng, [l.out_ch, l.in_ch, l.ksize, l.ksize]),
                true,
            )
            .expect("unique name");
            if l.bn {
                // bias is redundant (and gradient-free) in front of BN
                add_bn(&mut ps, &format!("{}.bn", l.name), l.out_ch);
            } else {
                ps.add(format!("{}.bias", l.name), Tensor::zeros(&[l.out_ch]), true)
                    .expect("unique name");
            }
        }
        ps
    }

    /// Score a `[N, 2, H, W]` batch; one scalar per sample.
    pub fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        input: &Tensor<T>,
        mode: BnMode,
    ) -> Result<DiscForward<T>> {
        let [_, c, _, _] = input.dims4()?;
        if c != 2 {
            return Err(Error::invalid("discriminator input must have 2 channels"));
        }
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut cur = input.clone();
        for l in &self.layers {
            let conv_input = cur;
            let kernel = params.value(&format!("{}.kernel", l.name))?;
            let bias_name = format!("{}.bias", l.name);
            let mut out = if params.contains(&bias_name) {
                conv2d_forward(&conv_input, kernel, params.value(&bias_name)?, l.stride, Padding::Same)?
            } else {
                let zero_bias = Tensor::zeros(&[l.out_ch]);
                conv2d_forward(&conv_input, kernel, &zero_bias, l.stride, Padding::Same)?
            };
            let bn_cache = if l.bn {
                let gamma = params.value(&format!("{}.bn.gamma", l.name))?;
                let beta = params.value(&format!("{}.bn.beta", l.name))?;
                let (bn_out, cache) = match mode {
                    BnMode::Train => batchnorm_train(&out, gamma, beta)?,
                    BnMode::Inference => {
                        let state = BnState {
                            running_mean: params
                                .value(&format!("{}.bn.running_mean", l.name))?
                                .clone(),
                            running_var: params
                                .value(&format!("{}.bn.running_var", l.name))?
                                .clone(),
                        };
                        batchnorm_inference(&out, gamma, beta, &state)?
                    }
                };
                out = bn_out;
                Some(cache)
            } else {
                None
            };
            let relu_input = if l.relu {
                let inp = out;
                out = relu(&inp);
                Some(inp)
            } else {
                None
            };
            traces.push(LayerTrace {
                conv_input,
                bn_cache,
                relu_input,
            });
            cur = out;
        }
        let final_shape = cur.shape().to_vec();
        let scores = spatial_mean(&cur)?;
        Ok(DiscForward {
            scores,
            layers: traces,
            final_shape,
        })
    }

    /// Backpropagate `score_grad` (`[N]`) through the recorded pass. With
    /// `accumulate_params = false` only the input gradient is produced (the
    /// frozen-discriminator path of the generator update).
    pub fn backward<T: Real>(
        &self,
        params: &mut ParamSet<T>,
        fwd: &DiscForward<T>,
        score_grad: &Tensor<T>,
        accumulate_params: bool,
    ) -> Result<Tensor<T>> {
        let mut grad = spatial_mean_backward(&fwd.final_shape, score_grad)?;
        for (l, trace) in self.layers.iter().zip(&fwd.layers).rev() {
            if let Some(relu_input) = &trace.relu_input {
                grad = relu_backward(relu_input, &grad)?;
            }
            if let Some(cache) = &trace.bn_cache {
                let gamma = params.value(&format!("{}.bn.gamma", l.name))?.clone();
                let grads = batchnorm_backward(&gamma, cache, &grad)?;
                if accumulate_params {
                    params.accumulate_grad(
                        &format!("{}.bn.gamma", l.name),
                        grads.param_grad("gamma").unwrap(),
                    )?;
                    params.accumulate_grad(
                        &format!("{}.bn.beta", l.name),
                        grads.param_grad("beta").unwrap(),
                    )?;
                }
                grad = grads.input_grad;
            }
            let kernel = params.value(&format!("{}.kernel", l.name))?.clone();
            let grads =
                conv2d_backward(&trace.conv_input, &kernel, l.stride, Padding::Same, &grad)?;
            if accumulate_params {
                params.accumulate_grad(
                    &format!("{}.kernel", l.name),
                    grads.param_grad("kernel").unwrap(),
                )?;
                let bias_name = format!("{}.bias", l.name);
                if params.contains(&bias_name) {
                    params.accumulate_grad(&bias_name, grads.param_grad("bias").unwrap())?;
                }
            }
            grad = grads.input_grad;
        }
        Ok(grad)
    }

    /// Fold train-mode batch statistics into the stored running statistics.
    pub fn commit_running_stats<T: Real>(
        &self,
        params: &mut ParamSet<T>,
        fwd: &DiscForward<T>,
    ) -> Result<()> {
        for (l, trace) in self.layers.iter().zip(&fwd.layers) {
            if let Some(cache) = &trace.bn_cache {
                if cache.mode == BnMode::Train {
                    let mut state = BnState {
                        running_mean: params
                            .value(&format!("{}.bn.running_mean", l.name))?
                            .clone(),
                        running_var: params.value(&format!("{}.bn.running_var", l.name))?.clone(),
                    };
                    apply_running_update(&mut state, cache);
                    params.set_value(&format!("{}.bn.running_mean", l.name), state.running_mean)?;
                    params.set_value(&format!("{}.bn.running_var", l.name), state.running_var)?;
                }
            }
        }
        Ok(())
    }
}
