//! Residual generator with optional interleaved hard data-consistency
//! projections, recorded on a tape for exact reverse-mode gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    complex_to_sample, sample_to_complex, GeneratorConfig, OutputActivation, ParamSet,
};
use crate::error::{Error, Result};
use crate::kspace::{self, ComplexImage, KSpaceData, SamplingMask};
use crate::numerics::{
    apply_running_update, batchnorm_backward, batchnorm_inference, batchnorm_train,
    conv2d_backward, conv2d_forward, relu, relu_backward, sigmoid, sigmoid_backward, BnCache,
    BnMode, BnState, Padding, Real, Tensor,
};

/// He-scaled Gaussian init for a conv kernel `[out, in, kh, kw]`.
pub(crate) fn he_conv_kernel<T: Real>(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor<T> {
    let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
    let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n)
        .map(|_| T::from_f64(normal.sample(rng)))
        .collect();
    Tensor::from_vec(&shape, data).expect("shape matches data")
}

/// Convs that feed straight into a BN layer carry no bias: the
/// normalization cancels any per-channel shift exactly, so the parameter
/// would be permanently gradient-free.
pub(crate) fn add_conv<T: Real>(
    ps: &mut ParamSet<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    shape: [usize; 4],
    bias: bool,
) {
    ps.add(format!("{name}.kernel"), he_conv_kernel(rng, shape), true)
        .expect("unique name");
    if bias {
        ps.add(format!("{name}.bias"), Tensor::zeros(&[shape[0]]), true)
            .expect("unique name");
    }
}

pub(crate) fn add_bn<T: Real>(ps: &mut ParamSet<T>, name: &str, channels: usize) {
    ps.add(format!("{name}.gamma"), Tensor::filled(&[channels], T::one()), true)
        .expect("unique name");
    ps.add(format!("{name}.beta"), Tensor::zeros(&[channels]), true)
        .expect("unique name");
    ps.add(
        format!("{name}.running_mean"),
        Tensor::zeros(&[channels]),
        false,
    )
    .expect("unique name");
    ps.add(
        format!("{name}.running_var"),
        Tensor::filled(&[channels], T::one()),
        false,
    )
    .expect("unique name");
}

enum GenStep<T> {
    Conv { name: String, input: Tensor<T> },
    Bn { name: String, cache: BnCache<T> },
    Relu { input: Tensor<T> },
    OutSigmoid { output: Tensor<T> },
    SkipStart,
    SkipEnd,
    Project,
}

/// Forward-pass record: the output plus everything backward needs.
pub struct GenForward<T> {
    pub output: Tensor<T>,
    steps: Vec<GenStep<T>>,
}

impl<T: Real> GenForward<T> {
    /// Smallest |pre-activation| seen by any ReLU in this pass.
    /// Finite-difference checks are only meaningful away from the kinks, so
    /// tests gate on this margin.
    pub fn min_relu_margin(&self) -> T {
        let mut m = T::infinity();
        for step in &self.steps {
            if let GenStep::Relu { input } = step {
                for &v in input.data() {
                    m = m.min(v.abs());
                }
            }
        }
        m
    }
}

pub struct Generator {
    cfg: GeneratorConfig,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Generator { cfg })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    /// Layer sequence: input conv 3x3 (2 -> F); per block
    /// conv3x3-BN-ReLU-conv3x3-BN with additive skip; three 1x1 convs
    /// (F -> F -> F -> 2) with ReLU after the first two and the configured
    /// activation on the last. Deterministic per seed.
    pub fn init_params<T: Real>(&self, seed: u64) -> ParamSet<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let f = self.cfg.feature_maps;
        add_conv(&mut ps, &mut rng, "input", [f, 2, 3, 3], true);
        for b in 1..=self.cfg.num_residual_blocks {
            add_conv(&mut ps, &mut rng, &format!("block{b}.conv1"), [f, f, 3, 3], false);
            add_bn(&mut ps, &format!("block{b}.bn1"), f);
            add_conv(&mut ps, &mut rng, &format!("block{b}.conv2"), [f, f, 3, 3], false);
            add_bn(&mut ps, &format!("block{b}.bn2"), f);
        }
        add_conv(&mut ps, &mut rng, "tail.conv1", [f, f, 1, 1], true);
        add_conv(&mut ps, &mut rng, "tail.conv2", [f, f, 1, 1], true);
        add_conv(&mut ps, &mut rng, "tail.conv3", [2, f, 1, 1], true);
        ps
    }

    fn apply_conv<T: Real>(
        params: &ParamSet<T>,
        steps: &mut Vec<GenStep<T>>,
        name: &str,
        input: Tensor<T>,
    ) -> Result<Tensor<T>> {
        let kernel = params.value(&format!("{name}.kernel"))?;
        let bias_name = format!("{name}.bias");
        let out = if params.contains(&bias_name) {
            conv2d_forward(&input, kernel, params.value(&bias_name)?, 1, Padding::Same)?
        } else {
            let zero_bias = Tensor::zeros(&[kernel.shape()[0]]);
            conv2d_forward(&input, kernel, &zero_bias, 1, Padding::Same)?
        };
        steps.push(GenStep::Conv {
            name: name.to_string(),
            input,
        });
        Ok(out)
    }

    fn apply_bn<T: Real>(
        params: &ParamSet<T>,
        steps: &mut Vec<GenStep<T>>,
        name: &str,
        input: &Tensor<T>,
        mode: BnMode,
    ) -> Result<Tensor<T>> {
        let gamma = params.value(&format!("{name}.gamma"))?;
        let beta = params.value(&format!("{name}.beta"))?;
        let (out, cache) = match mode {
            BnMode::Train => batchnorm_train(input, gamma, beta)?,
            BnMode::Inference => {
                let state = BnState {
                    running_mean: params.value(&format!("{name}.running_mean"))?.clone(),
                    running_var: params.value(&format!("{name}.running_var"))?.clone(),
                };
                batchnorm_inference(input, gamma, beta, &state)?
            }
        };
        steps.push(GenStep::Bn {
            name: name.to_string(),
            cache,
        });
        Ok(out)
    }

    fn apply_relu<T: Real>(steps: &mut Vec<GenStep<T>>, input: Tensor<T>) -> Tensor<T> {
        let out = relu(&input);
        steps.push(GenStep::Relu { input });
        out
    }

    /// Shared decoder: the 1x1 tail plus output activation.
    fn decode<T: Real>(
        &self,
        params: &ParamSet<T>,
        steps: &mut Vec<GenStep<T>>,
        feat: Tensor<T>,
    ) -> Result<Tensor<T>> {
        let t = Self::apply_conv(params, steps, "tail.conv1", feat)?;
        let t = Self::apply_relu(steps, t);
        let t = Self::apply_conv(params, steps, "tail.conv2", t)?;
        let t = Self::apply_relu(steps, t);
        let t = Self::apply_conv(params, steps, "tail.conv3", t)?;
        match self.cfg.output_activation {
            OutputActivation::Sigmoid => {
                let out = sigmoid(&t);
                steps.push(GenStep::OutSigmoid {
                    output: out.clone(),
                });
                Ok(out)
            }
            OutputActivation::Identity => Ok(t),
        }
    }

    fn project_batch<T: Real>(
        est: &Tensor<T>,
        y: &[KSpaceData],
        mask: &SamplingMask,
    ) -> Result<Tensor<T>> {
        let [n, _, h, w] = est.dims4()?;
        let mut out = est.clone();
        for s in 0..n {
            let img = ComplexImage::from_complex(h, w, sample_to_complex(est, s))?;
            let proj = kspace::project_data_consistent(&img, &y[s], mask)?;
            complex_to_sample(proj.complex(), &mut out, s);
        }
        Ok(out)
    }

    fn nullspace_batch<T: Real>(grad: &Tensor<T>, mask: &SamplingMask) -> Result<Tensor<T>> {
        let [n, _, h, w] = grad.dims4()?;
        let mut out = grad.clone();
        for s in 0..n {
            let img = ComplexImage::from_complex(h, w, sample_to_complex(grad, s))?;
            let proj = kspace::nullspace_project(&img, mask)?;
            complex_to_sample(proj.complex(), &mut out, s);
        }
        Ok(out)
    }

    /// Run the generator on a batch of zero-filled reconstructions
    /// (`[N, 2, H, W]`, normalized intensity space). `y`/`mask` are
    /// required whenever `num_dc_blocks > 0` and untouched otherwise.
    pub fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        x_tilde: &Tensor<T>,
        y: Option<&[KSpaceData]>,
        mask: Option<&SamplingMask>,
        mode: BnMode,
    ) -> Result<GenForward<T>> {
        let [n, c, h, w] = x_tilde.dims4()?;
        if c != 2 {
            return Err(Error::invalid("generator input must have 2 channels"));
        }
        let dc = self.cfg.num_dc_blocks;
        let (y, mask) = if dc > 0 {
            let y = y.ok_or_else(|| {
                Error::invalid("data-consistency projections need k-space measurements")
            })?;
            let mask =
                mask.ok_or_else(|| Error::invalid("data-consistency projections need a mask"))?;
            if y.len() != n {
                return Err(Error::invalid(format!(
                    "measurement batch size {} does not match input batch {n}",
                    y.len()
                )));
            }
            if mask.height() != h || mask.width() != w {
                return Err(Error::invalid("mask shape does not match input"));
            }
            (Some(y), Some(mask))
        } else {
            (None, None)
        };

        let mut steps = Vec::new();
        let mut feat = Self::apply_conv(params, &mut steps, "input", x_tilde.clone())?;
        let blocks = self.cfg.num_residual_blocks;
        let period = if dc > 0 { blocks.div_ceil(dc) } else { 0 };
        for b in 1..=blocks {
            steps.push(GenStep::SkipStart);
            let skip = feat.clone();
            let t = Self::apply_conv(params, &mut steps, &format!("block{b}.conv1"), feat)?;
            let t = Self::apply_bn(params, &mut steps, &format!("block{b}.bn1"), &t, mode)?;
            let t = Self::apply_relu(&mut steps, t);
            let t = Self::apply_conv(params, &mut steps, &format!("block{b}.conv2"), t)?;
            let mut t = Self::apply_bn(params, &mut steps, &format!("block{b}.bn2"), &t, mode)?;
            t.add_assign(&skip)?;
            steps.push(GenStep::SkipEnd);
            feat = t;

            if dc > 0 && b != blocks && b % period == 0 {
                // decode to image space, enforce the measurements, re-encode
                let est = self.decode(params, &mut steps, feat)?;
                let proj = Self::project_batch(&est, y.unwrap(), mask.unwrap())?;
                steps.push(GenStep::Project);
                feat = Self::apply_conv(params, &mut steps, "input", proj)?;
            }
        }
        let mut out = self.decode(params, &mut steps, feat)?;
        if dc > 0 {
            out = Self::project_batch(&out, y.unwrap(), mask.unwrap())?;
            steps.push(GenStep::Project);
        }
        Ok(GenForward {
            output: out,
            steps,
        })
    }

    /// Accumulate parameter gradients (into `params`' grad buffers) for the
    /// recorded forward pass; returns the gradient w.r.t. the input batch.
    /// `mask` is required when the pass contained projections (their
    /// Jacobian is the nullspace projection).
    pub fn backward<T: Real>(
        &self,
        params: &mut ParamSet<T>,
        fwd: &GenForward<T>,
        output_grad: &Tensor<T>,
        mask: Option<&SamplingMask>,
    ) -> Result<Tensor<T>> {
        if output_grad.shape() != fwd.output.shape() {
            return Err(Error::invalid("generator output_grad shape mismatch"));
        }
        let mut grad = output_grad.clone();
        let mut skip_stack: Vec<Tensor<T>> = Vec::new();
        for step in fwd.steps.iter().rev() {
            match step {
                GenStep::Conv { name, input } => {
                    let kernel = params.value(&format!("{name}.kernel"))?.clone();
                    let grads = conv2d_backward(input, &kernel, 1, Padding::Same, &grad)?;
                    params.accumulate_grad(
                        &format!("{name}.kernel"),
                        grads.param_grad("kernel").unwrap(),
                    )?;
                    let bias_name = format!("{name}.bias");
                    if params.contains(&bias_name) {
                        params.accumulate_grad(&bias_name, grads.param_grad("bias").unwrap())?;
                    }
                    grad = grads.input_grad;
                }
                GenStep::Bn { name, cache } => {
                    let gamma = params.value(&format!("{name}.gamma"))?.clone();
                    let grads = batchnorm_backward(&gamma, cache, &grad)?;
                    params.accumulate_grad(
                        &format!("{name}.gamma"),
                        grads.param_grad("gamma").unwrap(),
                    )?;
                    params.accumulate_grad(
                        &format!("{name}.beta"),
                        grads.param_grad("beta").unwrap(),
                    )?;
                    grad = grads.input_grad;
                }
                GenStep::Relu { input } => grad = relu_backward(input, &grad)?,
                GenStep::OutSigmoid { output } => grad = sigmoid_backward(output, &grad)?,
                GenStep::SkipEnd => skip_stack.push(grad.clone()),
                GenStep::SkipStart => {
                    let s = skip_stack
                        .pop()
                        .ok_or_else(|| Error::invalid("unbalanced skip markers"))?;
                    grad.add_assign(&s)?;
                }
                GenStep::Project => {
                    let mask = mask.ok_or_else(|| {
                        Error::invalid("backward through projections needs the mask")
                    })?;
                    grad = Self::nullspace_batch(&grad, mask)?;
                }
            }
        }
        Ok(grad)
    }

    /// Fold the batch statistics recorded during a train-mode forward pass
    /// into the running statistics stored in `params`.
    pub fn commit_running_stats<T: Real>(
        &self,
        params: &mut ParamSet<T>,
        fwd: &GenForward<T>,
    ) -> Result<()> {
        for step in &fwd.steps {
            if let GenStep::Bn { name, cache } = step {
                if cache.mode == BnMode::Train {
                    let mut state = BnState {
                        running_mean: params.value(&format!("{name}.running_mean"))?.clone(),
                        running_var: params.value(&format!("{name}.running_var"))?.clone(),
                    };
                    apply_running_update(&mut state, cache);
                    params.set_value(&format!("{name}.running_mean"), state.running_mean)?;
                    params.set_value(&format!("{name}.running_var"), state.running_var)?;
                }
            }
        }
        Ok(())
    }
}
