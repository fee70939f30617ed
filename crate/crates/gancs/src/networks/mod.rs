//! The generator (residual network with optional interleaved
//! data-consistency projections) and the discriminator (strided CNN
//! scorer), assembled from the numerics kernels with hand-rolled
//! reverse-mode backward passes.

mod checkpoint;
mod discriminator;
mod generator;
mod params;

pub use checkpoint::Checkpoint;
pub use discriminator::{DiscForward, Discriminator};
pub use generator::{GenForward, Generator};
pub use params::{Param, ParamSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::ComplexImage;
use crate::numerics::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Sigmoid,
    Identity,
}

impl std::str::FromStr for OutputActivation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(OutputActivation::Sigmoid),
            "identity" => Ok(OutputActivation::Identity),
            other => Err(Error::invalid(format!(
                "unknown output activation '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_residual_blocks: usize,
    pub feature_maps: usize,
    /// Number of hard data-consistency projections interleaved into the
    /// forward pass; 0 disables all k-space operations, 1 projects the
    /// final output only, d > 1 additionally projects (decode, project,
    /// re-encode with the shared input/tail layers) after every
    /// `ceil(num_residual_blocks / d)` residual blocks.
    pub num_dc_blocks: usize,
    pub output_activation: OutputActivation,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_residual_blocks: 8,
            feature_maps: 64,
            num_dc_blocks: 1,
            output_activation: OutputActivation::Sigmoid,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_residual_blocks < 1 {
            return Err(Error::invalid(
                "generator needs at least one residual block",
            ));
        }
        if self.feature_maps < 1 {
            return Err(Error::invalid("generator needs at least one feature map"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub num_layers: usize,
    /// Feature maps of the first layer; doubled per layer across the
    /// strided prefix.
    pub base_feature_maps: usize,
    /// How many leading layers use stride 2.
    pub stride2_layers: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            num_layers: 8,
            base_feature_maps: 8,
            stride2_layers: 4,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 3 {
            return Err(Error::invalid("discriminator needs at least 3 layers"));
        }
        if self.base_feature_maps < 1 {
            return Err(Error::invalid(
                "discriminator needs at least one feature map",
            ));
        }
        if self.stride2_layers > self.num_layers {
            return Err(Error::invalid(
                "stride2_layers exceeds the number of layers",
            ));
        }
        Ok(())
    }
}

/// Pack complex images into an `[N, 2, H, W]` activation tensor
/// (channel 0 = real, channel 1 = imaginary).
pub fn images_to_batch<T: Real>(images: &[&ComplexImage]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("empty image batch"))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * 2 * h * w);
    for img in images {
        if img.height() != h || img.width() != w {
            return Err(Error::invalid("batch images have differing shapes"));
        }
        data.extend(img.complex().iter().map(|v| T::from_f64(v.re)));
        data.extend(img.complex().iter().map(|v| T::from_f64(v.im)));
    }
    Tensor::from_vec(&[images.len(), 2, h, w], data)
}

/// Unpack an `[N, 2, H, W]` tensor into complex images (always `f64`).
pub fn batch_to_images<T: Real>(batch: &Tensor<T>) -> Result<Vec<ComplexImage>> {
    let [n, c, h, w] = batch.dims4()?;
    if c != 2 {
        return Err(Error::invalid("image batch must have 2 channels"));
    }
    let plane = h * w;
    (0..n)
        .map(|b| {
            let base = b * 2 * plane;
            let data = (0..plane)
                .map(|i| {
                    Complex64::new(
                        batch.data()[base + i].to_f64(),
                        batch.data()[base + plane + i].to_f64(),
                    )
                })
                .collect();
            ComplexImage::from_complex(h, w, data)
        })
        .collect()
}

/// View one sample of an `[N, 2, H, W]` batch as a complex vector.
pub(crate) fn sample_to_complex<T: Real>(batch: &Tensor<T>, sample: usize) -> Vec<Complex64> {
    let [_, _, h, w] = batch.dims4().expect("rank-4 batch");
    let plane = h * w;
    let base = sample * 2 * plane;
    (0..plane)
        .map(|i| {
            Complex64::new(
                batch.data()[base + i].to_f64(),
                batch.data()[base + plane + i].to_f64(),
            )
        })
        .collect()
}

/// Write a complex vector back into one sample of an `[N, 2, H, W]` batch.
pub(crate) fn complex_to_sample<T: Real>(
    values: &[Complex64],
    batch: &mut Tensor<T>,
    sample: usize,
) {
    let [_, _, h, w] = batch.dims4().expect("rank-4 batch");
    let plane = h * w;
    let base = sample * 2 * plane;
    for (i, v) in values.iter().enumerate() {
        batch.data_mut()[base + i] = T::from_f64(v.re);
        batch.data_mut()[base + plane + i] = T::from_f64(v.im);
    }
}
