//! The measurement model: a masked, centered, orthonormal 2D Fourier
//! operator, its adjoint (which equals the pseudo-inverse for a binary mask
//! of a unitary transform), and data-consistency / nullspace projections.
//!
//! Conventions: DC sits at the array center (row `h/2`, column `w/2`),
//! and both transform directions are scaled by `1/sqrt(h*w)` so the pair is
//! exactly unitary and mutually adjoint.

mod fft;
mod mask;
mod types;

pub use mask::make_vardens_mask;
pub use types::{ComplexImage, KSpaceData, SamplingMask};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// In-place centered unitary 2D DFT on a raw row-major buffer; exposed for
/// solvers that work directly in the Fourier-diagonal basis.
pub fn fft2_centered_buffer(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    fft::fft2_centered(data, h, w, inverse);
}

fn check_image_mask(x: &ComplexImage, mask: &SamplingMask) -> Result<()> {
    if x.height() != mask.height() || x.width() != mask.width() {
        return Err(Error::invalid(format!(
            "image {}x{} does not match mask {}x{}",
            x.height(),
            x.width(),
            mask.height(),
            mask.width()
        )));
    }
    Ok(())
}

fn check_kspace_mask(y: &KSpaceData, mask: &SamplingMask) -> Result<()> {
    if y.height() != mask.height() || y.width() != mask.width() {
        return Err(Error::invalid(format!(
            "k-space {}x{} does not match mask {}x{}",
            y.height(),
            y.width(),
            mask.height(),
            mask.width()
        )));
    }
    if y.mask_id() != mask.id() {
        return Err(Error::invalid(
            "k-space data was produced with a different sampling mask",
        ));
    }
    Ok(())
}

/// Masked forward transform: centered unitary 2D DFT of `x`, zeroed off the
/// sampling set.
pub fn forward(x: &ComplexImage, mask: &SamplingMask) -> Result<KSpaceData> {
    check_image_mask(x, mask)?;
    let mut data = x.complex().to_vec();
    fft::fft2_centered(&mut data, x.height(), x.width(), false);
    for (v, &m) in data.iter_mut().zip(mask.indicator()) {
        if m == 0 {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(KSpaceData::new_unchecked(
        x.height(),
        x.width(),
        data,
        mask.id(),
    ))
}

/// Adjoint of [`forward`]: inverse centered unitary 2D DFT of the masked
/// data. This is the zero-filled reconstruction of `y`.
pub fn adjoint(y: &KSpaceData, mask: &SamplingMask) -> Result<ComplexImage> {
    check_kspace_mask(y, mask)?;
    let mut data = y.complex().to_vec();
    fft::fft2_centered(&mut data, y.height(), y.width(), true);
    ComplexImage::from_complex(y.height(), y.width(), data)
}

/// Add zero-mean Gaussian noise of standard deviation `sigma` to the real
/// and imaginary parts at sampled locations only; deterministic per seed.
pub fn add_noise(y: &KSpaceData, mask: &SamplingMask, sigma: f64, seed: u64) -> Result<KSpaceData> {
    if sigma < 0.0 {
        return Err(Error::invalid("noise sigma must be >= 0"));
    }
    check_kspace_mask(y, mask)?;
    if sigma == 0.0 {
        return Ok(y.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = y.complex().to_vec();
    for (v, &m) in data.iter_mut().zip(mask.indicator()) {
        if m != 0 {
            *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    Ok(KSpaceData::new_unchecked(
        y.height(),
        y.width(),
        data,
        mask.id(),
    ))
}

/// Hard affine projection onto the set of images consistent with `y`: the
/// k-space coefficients of `x_check` on the sampling set are replaced by the
/// measured values.
pub fn project_data_consistent(
    x_check: &ComplexImage,
    y: &KSpaceData,
    mask: &SamplingMask,
) -> Result<ComplexImage> {
    check_image_mask(x_check, mask)?;
    check_kspace_mask(y, mask)?;
    let mut data = x_check.complex().to_vec();
    fft::fft2_centered(&mut data, x_check.height(), x_check.width(), false);
    for ((v, &m), &meas) in data.iter_mut().zip(mask.indicator()).zip(y.complex()) {
        if m != 0 {
            *v = meas;
        }
    }
    fft::fft2_centered(&mut data, x_check.height(), x_check.width(), true);
    ComplexImage::from_complex(x_check.height(), x_check.width(), data)
}

/// Projection onto the nullspace of the measurement operator: zero the
/// k-space coefficients on the sampling set.
pub fn nullspace_project(x: &ComplexImage, mask: &SamplingMask) -> Result<ComplexImage> {
    check_image_mask(x, mask)?;
    let mut data = x.complex().to_vec();
    fft::fft2_centered(&mut data, x.height(), x.width(), false);
    for (v, &m) in data.iter_mut().zip(mask.indicator()) {
        if m != 0 {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    fft::fft2_centered(&mut data, x.height(), x.width(), true);
    ComplexImage::from_complex(x.height(), x.width(), data)
}
