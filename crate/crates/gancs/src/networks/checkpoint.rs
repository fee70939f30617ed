//! Checkpoint persistence: both network configs, the dataset normalization
//! constants, and every named tensor of both parameter sets.

use std::io::{Read, Write};
use std::path::Path;

use super::{
    images_to_batch, batch_to_images, Discriminator, DiscriminatorConfig, Generator,
    GeneratorConfig, OutputActivation, ParamSet,
};
use crate::data::NormConstants;
use crate::error::{format_err, Error, Result};
use crate::kspace::{self, ComplexImage, KSpaceData, SamplingMask};
use crate::numerics::{BnMode, Real, Tensor};

const MAGIC: &[u8; 4] = b"GCSC";
const VERSION: u16 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub g_config: GeneratorConfig,
    pub d_config: DiscriminatorConfig,
    pub normalization: NormConstants,
    pub g_params: ParamSet<T>,
    pub d_params: ParamSet<T>,
}

fn write_named_tensors<T: Real, W: Write>(w: &mut W, params: &ParamSet<T>) -> std::io::Result<()> {
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        p.value.write_to(w)?;
    }
    Ok(())
}

fn read_named_tensors<T: Real, R: Read>(
    r: &mut R,
    into: &mut ParamSet<T>,
) -> std::io::Result<()> {
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let count = u32::from_le_bytes(b4) as usize;
    if count != into.len() {
        return Err(format_err(format!(
            "checkpoint holds {count} tensors, architecture expects {}",
            into.len()
        )));
    }
    let mut b2 = [0u8; 2];
    for _ in 0..count {
        r.read_exact(&mut b2)?;
        let len = u16::from_le_bytes(b2) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| format_err("bad tensor name"))?;
        let tensor = Tensor::<T>::read_from(r)?;
        if !into.contains(&name) {
            return Err(format_err(format!("unexpected tensor '{name}'")));
        }
        into.set_value(&name, tensor)
            .map_err(|e| format_err(e.to_string()))?;
    }
    Ok(())
}

impl<T: Real> Checkpoint<T> {
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.g_config.num_residual_blocks as u32).to_le_bytes())?;
        w.write_all(&(self.g_config.feature_maps as u32).to_le_bytes())?;
        w.write_all(&(self.g_config.num_dc_blocks as u32).to_le_bytes())?;
        w.write_all(&[match self.g_config.output_activation {
            OutputActivation::Sigmoid => 0u8,
            OutputActivation::Identity => 1u8,
        }])?;
        w.write_all(&(self.d_config.num_layers as u32).to_le_bytes())?;
        w.write_all(&(self.d_config.base_feature_maps as u32).to_le_bytes())?;
        w.write_all(&(self.d_config.stride2_layers as u32).to_le_bytes())?;
        for v in self.normalization.as_array() {
            w.write_all(&v.to_le_bytes())?;
        }
        write_named_tensors(w, &self.g_params)?;
        write_named_tensors(w, &self.d_params)
    }

    pub fn read_from<R: Read>(r: &mut R) -> std::io::Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(format_err("bad checkpoint magic"));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        if u16::from_le_bytes(b2) != VERSION {
            return Err(format_err("unsupported checkpoint version"));
        }
        let mut b4 = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> std::io::Result<usize> {
            r.read_exact(&mut b4)?;
            Ok(u32::from_le_bytes(b4) as usize)
        };
        let num_residual_blocks = read_u32(r)?;
        let feature_maps = read_u32(r)?;
        let num_dc_blocks = read_u32(r)?;
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let output_activation = match b1[0] {
            0 => OutputActivation::Sigmoid,
            1 => OutputActivation::Identity,
            other => return Err(format_err(format!("bad activation tag {other}"))),
        };
        let mut b4 = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> std::io::Result<usize> {
            r.read_exact(&mut b4)?;
            Ok(u32::from_le_bytes(b4) as usize)
        };
        let num_layers = read_u32(r)?;
        let base_feature_maps = read_u32(r)?;
        let stride2_layers = read_u32(r)?;
        let mut b8 = [0u8; 8];
        let mut norm = [0.0f64; 4];
        for v in &mut norm {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }

        let g_config = GeneratorConfig {
            num_residual_blocks,
            feature_maps,
            num_dc_blocks,
            output_activation,
        };
        let d_config = DiscriminatorConfig {
            num_layers,
            base_feature_maps,
            stride2_layers,
        };
        let generator =
            Generator::new(g_config).map_err(|e| format_err(e.to_string()))?;
        let discriminator =
            Discriminator::new(d_config).map_err(|e| format_err(e.to_string()))?;
        let mut g_params: ParamSet<T> = generator.init_params(0);
        let mut d_params: ParamSet<T> = discriminator.init_params(0);
        read_named_tensors(r, &mut g_params)?;
        read_named_tensors(r, &mut d_params)?;
        Ok(Checkpoint {
            g_config,
            d_config,
            normalization: NormConstants::from_array(norm),
            g_params,
            d_params,
        })
    }

    /// Atomic save: write to a temp file in the same directory, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::io::BufWriter::new(
                std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?,
            );
            self.write_to(&mut f).map_err(|e| Error::io(&tmp, e))?;
            f.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(
            std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
        );
        Self::read_from(&mut f).map_err(|e| Error::io(path, e))
    }

    /// Zero-fill each measurement, run the generator in inference mode, and
    /// return the reconstructions in normalized intensity space (use
    /// [`crate::data::denormalize`] with `self.normalization` for raw-scale
    /// images).
    pub fn reconstruct(
        &self,
        ys: &[KSpaceData],
        mask: &SamplingMask,
    ) -> Result<Vec<ComplexImage>> {
        let generator = Generator::new(self.g_config)?;
        let x_tilde: Vec<ComplexImage> = ys
            .iter()
            .map(|y| kspace::adjoint(y, mask))
            .collect::<Result<_>>()?;
        let xt: Tensor<T> = images_to_batch(&x_tilde.iter().collect::<Vec<_>>())?;
        let needs_dc = self.g_config.num_dc_blocks > 0;
        let fwd = generator.forward(
            &self.g_params,
            &xt,
            if needs_dc { Some(ys) } else { None },
            if needs_dc { Some(mask) } else { None },
            BnMode::Inference,
        )?;
        batch_to_images(&fwd.output)
    }
}
