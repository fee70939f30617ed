//! Compressed-sensing MRI reconstruction at desk scale: a masked-Fourier
//! measurement model, a from-scratch residual generator / CNN discriminator
//! pair trained with a least-squares-GAN + pixel + data-consistency
//! objective, classical sparse-recovery baselines (wavelet FISTA, total
//! variation ADMM), image-quality metrics, and synthetic phantom data.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod kspace;
pub mod metrics;
pub mod networks;
pub mod numerics;
pub mod theory;
pub mod training;

pub use error::{Error, Result};

/// SplitMix64 step; used to derive independent sub-seeds from one user seed.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
