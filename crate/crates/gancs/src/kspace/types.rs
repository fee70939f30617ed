//! Domain types for the measurement model.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{format_err, Error, Result};

const MASK_MAGIC: &[u8; 4] = b"GCSM";
const MASK_VERSION: u16 = 1;

/// A complex-valued 2D image; entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        ComplexImage {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn from_complex(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "image data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::numerical("image contains non-finite entries"));
        }
        Ok(ComplexImage {
            height,
            width,
            data,
        })
    }

    pub fn from_planes(height: usize, width: usize, real: &[f64], imag: &[f64]) -> Result<Self> {
        if real.len() != height * width || imag.len() != height * width {
            return Err(Error::invalid(format!(
                "plane length {}/{} does not match {height}x{width}",
                real.len(),
                imag.len()
            )));
        }
        let data = real
            .iter()
            .zip(imag)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect();
        Self::from_complex(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn complex(&self) -> &[Complex64] {
        &self.data
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn real_plane(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.re).collect()
    }

    pub fn imag_plane(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.im).collect()
    }

    pub fn magnitude_plane(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Relative L2 distance `||a - b|| / ||a||`, with a zero-safe floor.
    pub fn rel_l2_distance(&self, other: &ComplexImage) -> f64 {
        let num: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        num / self.l2_norm().max(1e-300)
    }
}

/// Binary k-space sampling pattern plus the parameters that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    indicator: Vec<u8>,
    fraction: f64,
    density_power: f64,
    seed: u64,
}

impl SamplingMask {
    pub(crate) fn new_unchecked(
        height: usize,
        width: usize,
        indicator: Vec<u8>,
        fraction: f64,
        density_power: f64,
        seed: u64,
    ) -> Self {
        debug_assert_eq!(indicator.len(), height * width);
        SamplingMask {
            height,
            width,
            indicator,
            fraction,
            density_power,
            seed,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn indicator(&self) -> &[u8] {
        &self.indicator
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn density_power(&self) -> f64 {
        self.density_power
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_sampled(&self, row: usize, col: usize) -> bool {
        self.indicator[row * self.width + col] != 0
    }

    pub fn count_sampled(&self) -> usize {
        self.indicator.iter().filter(|&&m| m != 0).count()
    }

    pub fn is_full(&self) -> bool {
        self.count_sampled() == self.indicator.len()
    }

    /// Stable identity of this mask (FNV-1a over header and indicator bits);
    /// k-space data carries it so mismatched masks are caught early.
    pub fn id(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(&(self.height as u64).to_le_bytes());
        eat(&(self.width as u64).to_le_bytes());
        eat(&self.fraction.to_le_bytes());
        eat(&self.density_power.to_le_bytes());
        eat(&self.seed.to_le_bytes());
        eat(&self.indicator);
        h
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MASK_MAGIC)?;
        w.write_all(&MASK_VERSION.to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&self.fraction.to_le_bytes())?;
        w.write_all(&self.density_power.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        // row-major indicator packed LSB-first, final byte zero-padded
        let mut byte = 0u8;
        for (i, &m) in self.indicator.iter().enumerate() {
            if m != 0 {
                byte |= 1 << (i % 8);
            }
            if i % 8 == 7 {
                w.write_all(&[byte])?;
                byte = 0;
            }
        }
        if self.indicator.len() % 8 != 0 {
            w.write_all(&[byte])?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> std::io::Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MASK_MAGIC {
            return Err(format_err("bad mask magic"));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        if u16::from_le_bytes(b2) != MASK_VERSION {
            return Err(format_err("unsupported mask version"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let height = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let width = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let fraction = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let density_power = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);

        let n = height * width;
        let mut packed = vec![0u8; n.div_ceil(8)];
        r.read_exact(&mut packed)?;
        let indicator: Vec<u8> = (0..n)
            .map(|i| (packed[i / 8] >> (i % 8)) & 1)
            .collect();

        let expected = (fraction * n as f64).round() as i64;
        let got = indicator.iter().filter(|&&m| m != 0).count() as i64;
        if (expected - got).abs() > 1 {
            return Err(format_err(format!(
                "mask sample count {got} inconsistent with stored fraction (expected ~{expected})"
            )));
        }
        Ok(SamplingMask {
            height,
            width,
            indicator,
            fraction,
            density_power,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f =
            std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_to(&mut f).map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f =
            std::io::BufReader::new(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
        Self::read_from(&mut f).map_err(|e| Error::io(path, e))
    }
}

/// Undersampled k-space measurements; entries off the sampling set are
/// exactly zero, and `mask_id` ties the data to the mask that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceData {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
    mask_id: u64,
}

impl KSpaceData {
    pub(crate) fn new_unchecked(
        height: usize,
        width: usize,
        data: Vec<Complex64>,
        mask_id: u64,
    ) -> Self {
        KSpaceData {
            height,
            width,
            data,
            mask_id,
        }
    }

    /// Wrap raw coefficients, verifying they vanish off the mask support.
    pub fn from_masked_data(
        height: usize,
        width: usize,
        data: Vec<Complex64>,
        mask: &SamplingMask,
    ) -> Result<Self> {
        if height != mask.height() || width != mask.width() {
            return Err(Error::invalid("k-space dims do not match mask"));
        }
        if data.len() != height * width {
            return Err(Error::invalid("k-space data length mismatch"));
        }
        for (v, &m) in data.iter().zip(mask.indicator()) {
            if m == 0 && (v.re != 0.0 || v.im != 0.0) {
                return Err(Error::invalid(
                    "k-space data is nonzero outside the mask support",
                ));
            }
        }
        Ok(KSpaceData {
            height,
            width,
            data,
            mask_id: mask.id(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn complex(&self) -> &[Complex64] {
        &self.data
    }

    pub fn mask_id(&self) -> u64 {
        self.mask_id
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}
