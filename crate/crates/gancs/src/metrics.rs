//! Image-quality metrics: SNR in dB, SSIM on a central crop, normalized
//! RMSE, and a small wall-clock timing helper.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::ComplexImage;

/// SNR values are capped here; exact equality would otherwise be infinite.
pub const SNR_CAP_DB: f64 = 300.0;

/// SSIM constants (11x11 Gaussian window, sigma 1.5, K1/K2 defaults).
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub snr_db: f64,
    pub ssim: f64,
    pub nrmse: f64,
    pub recon_time_seconds: f64,
}

fn check_shapes(reference: &ComplexImage, estimate: &ComplexImage) -> Result<()> {
    if reference.height() != estimate.height() || reference.width() != estimate.width() {
        return Err(Error::invalid(format!(
            "metric shape mismatch: {}x{} vs {}x{}",
            reference.height(),
            reference.width(),
            estimate.height(),
            estimate.width()
        )));
    }
    Ok(())
}

/// `20 * log10(||ref|| / ||ref - est||)` over complex entries, capped at
/// [`SNR_CAP_DB`].
pub fn snr_db(reference: &ComplexImage, estimate: &ComplexImage) -> Result<f64> {
    check_shapes(reference, estimate)?;
    let ref_norm = reference.l2_norm();
    if ref_norm == 0.0 {
        return Err(Error::invalid("SNR undefined for a zero reference"));
    }
    let err_norm: f64 = reference
        .complex()
        .iter()
        .zip(estimate.complex())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if err_norm == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((20.0 * (ref_norm / err_norm).log10()).min(SNR_CAP_DB))
}

/// `||ref - est|| / ||ref||` over complex entries.
pub fn nrmse(reference: &ComplexImage, estimate: &ComplexImage) -> Result<f64> {
    check_shapes(reference, estimate)?;
    let ref_norm = reference.l2_norm();
    if ref_norm == 0.0 {
        return Err(Error::invalid("NRMSE undefined for a zero reference"));
    }
    let err_norm: f64 = reference
        .complex()
        .iter()
        .zip(estimate.complex())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(err_norm / ref_norm)
}

fn gaussian_kernel() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as i64;
    let mut k = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    let mut sum = 0.0;
    for r in -half..=half {
        for c in -half..=half {
            let v = (-((r * r + c * c) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            k.push(v);
            sum += v;
        }
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn central_crop(img: &ComplexImage, crop: usize) -> Vec<f64> {
    let r0 = (img.height() - crop) / 2;
    let c0 = (img.width() - crop) / 2;
    let mut out = Vec::with_capacity(crop * crop);
    for r in r0..r0 + crop {
        for c in c0..c0 + crop {
            out.push(img.at(r, c).norm());
        }
    }
    out
}

/// Mean SSIM of the magnitude images over a centered `crop x crop` window,
/// computed with an 11x11 Gaussian weighting at every position where the
/// window fits inside the crop. The dynamic range is taken from the
/// reference crop, which makes the metric asymmetric under swapping
/// arguments; tests pin that convention.
pub fn ssim_cropped(reference: &ComplexImage, estimate: &ComplexImage, crop: usize) -> Result<f64> {
    check_shapes(reference, estimate)?;
    if crop > reference.height().min(reference.width()) {
        return Err(Error::invalid(format!(
            "crop {crop} exceeds image extent {}x{}",
            reference.height(),
            reference.width()
        )));
    }
    if crop < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "crop {crop} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let a = central_crop(reference, crop);
    let b = central_crop(estimate, crop);
    let range = a.iter().fold(0.0_f64, |m, &v| m.max(v)).max(1e-12);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let kernel = gaussian_kernel();

    let positions = crop - SSIM_WINDOW + 1;
    let mut total = 0.0;
    for wr in 0..positions {
        for wc in 0..positions {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            for kr in 0..SSIM_WINDOW {
                for kc in 0..SSIM_WINDOW {
                    let w = kernel[kr * SSIM_WINDOW + kc];
                    mu_a += w * a[(wr + kr) * crop + wc + kc];
                    mu_b += w * b[(wr + kr) * crop + wc + kc];
                }
            }
            let mut var_a = 0.0;
            let mut var_b = 0.0;
            let mut cov = 0.0;
            for kr in 0..SSIM_WINDOW {
                for kc in 0..SSIM_WINDOW {
                    let w = kernel[kr * SSIM_WINDOW + kc];
                    let da = a[(wr + kr) * crop + wc + kc] - mu_a;
                    let db = b[(wr + kr) * crop + wc + kc] - mu_b;
                    var_a += w * da * da;
                    var_b += w * db * db;
                    cov += w * da * db;
                }
            }
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
    }
    Ok(total / (positions * positions) as f64)
}

/// Median wall-clock seconds of `f` over `repeats` runs after one warm-up
/// call. Meaningful only without concurrent load.
pub fn time_reconstruction<R>(mut f: impl FnMut() -> R, repeats: usize) -> Result<f64> {
    if repeats == 0 {
        return Err(Error::invalid("timing needs at least one repeat"));
    }
    let _ = f(); // warm-up
    let mut times: Vec<f64> = (0..repeats)
        .map(|_| {
            let t0 = Instant::now();
            let _ = f();
            t0.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = times.len();
    Ok(if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ComplexImage {
        let data = (0..h * w)
            .map(|_| Complex64::new(rng.random_range(0.0..1.0), rng.random_range(-0.2..0.2)))
            .collect();
        ComplexImage::from_complex(h, w, data).unwrap()
    }

    #[test]
    fn snr_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_image(&mut rng, 16, 16);
        assert_eq!(snr_db(&x, &x).unwrap(), SNR_CAP_DB);

        // estimate = 1.1 * reference -> error is 0.1 * signal -> 20 dB
        let scaled = ComplexImage::from_complex(
            16,
            16,
            x.complex().iter().map(|v| v * 1.1).collect(),
        )
        .unwrap();
        assert!((snr_db(&x, &scaled).unwrap() - 20.0).abs() < 1e-9);

        let zero = ComplexImage::zeros(16, 16);
        assert!((snr_db(&x, &zero).unwrap() - 0.0).abs() < 1e-12);
        assert!(snr_db(&zero, &x).is_err());
    }

    #[test]
    fn snr_error_halving_adds_six_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_image(&mut rng, 16, 16);
        let noise = random_image(&mut rng, 16, 16);
        let with = |scale: f64| {
            ComplexImage::from_complex(
                16,
                16,
                x.complex()
                    .iter()
                    .zip(noise.complex())
                    .map(|(a, b)| a + b * scale)
                    .collect(),
            )
            .unwrap()
        };
        let d = snr_db(&x, &with(0.05)).unwrap() - snr_db(&x, &with(0.1)).unwrap();
        assert!((d - 20.0 * 2.0_f64.log10()).abs() < 0.01, "delta {d}");
    }

    #[test]
    fn nrmse_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_image(&mut rng, 12, 12);
        assert_eq!(nrmse(&x, &x).unwrap(), 0.0);
        let zero = ComplexImage::zeros(12, 12);
        assert!((nrmse(&x, &zero).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nrmse_orthogonal_perturbation() {
        // e orthogonal to ref with ||e|| = 0.2 ||ref|| gives exactly 0.2
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_image(&mut rng, 16, 16);
        let raw = random_image(&mut rng, 16, 16);
        // Gram-Schmidt: remove the component of raw along x
        let xx: f64 = x.complex().iter().map(|v| v.norm_sqr()).sum();
        let proj: Complex64 = x
            .complex()
            .iter()
            .zip(raw.complex())
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            / xx;
        let e: Vec<Complex64> = raw
            .complex()
            .iter()
            .zip(x.complex())
            .map(|(r, a)| r - proj * a)
            .collect();
        let en: f64 = e.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let target = 0.2 * x.l2_norm();
        let est = ComplexImage::from_complex(
            16,
            16,
            x.complex()
                .iter()
                .zip(&e)
                .map(|(a, b)| a + b * (target / en))
                .collect(),
        )
        .unwrap();
        assert!((nrmse(&x, &est).unwrap() - 0.2).abs() < 1e-12);
    }

    /// Straightforward second implementation used as the oracle: same
    /// convention, written as one flat loop per window without the shared
    /// kernel/crop helpers.
    fn ssim_oracle(reference: &ComplexImage, estimate: &ComplexImage, crop: usize) -> f64 {
        let h = reference.height();
        let w = reference.width();
        let r0 = (h - crop) / 2;
        let c0 = (w - crop) / 2;
        let mag = |img: &ComplexImage, r: usize, c: usize| img.at(r0 + r, c0 + c).norm();
        let mut range: f64 = 0.0;
        for r in 0..crop {
            for c in 0..crop {
                range = range.max(mag(reference, r, c));
            }
        }
        let range = range.max(1e-12);
        let c1 = (0.01 * range) * (0.01 * range);
        let c2 = (0.03 * range) * (0.03 * range);
        let mut acc = 0.0;
        let mut count = 0usize;
        for wr in 0..=(crop - 11) {
            for wc in 0..=(crop - 11) {
                let mut wsum = 0.0;
                let mut ma = 0.0;
                let mut mb = 0.0;
                let weight = |kr: usize, kc: usize| -> f64 {
                    let dr = kr as f64 - 5.0;
                    let dc = kc as f64 - 5.0;
                    (-(dr * dr + dc * dc) / 4.5).exp()
                };
                for kr in 0..11 {
                    for kc in 0..11 {
                        let wgt = weight(kr, kc);
                        wsum += wgt;
                        ma += wgt * mag(reference, wr + kr, wc + kc);
                        mb += wgt * mag(estimate, wr + kr, wc + kc);
                    }
                }
                ma /= wsum;
                mb /= wsum;
                let mut va = 0.0;
                let mut vb = 0.0;
                let mut cab = 0.0;
                for kr in 0..11 {
                    for kc in 0..11 {
                        let wgt = weight(kr, kc) / wsum;
                        let da = mag(reference, wr + kr, wc + kc) - ma;
                        let db = mag(estimate, wr + kr, wc + kc) - mb;
                        va += wgt * da * da;
                        vb += wgt * db * db;
                        cab += wgt * da * db;
                    }
                }
                acc += ((2.0 * ma * mb + c1) * (2.0 * cab + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        acc / count as f64
    }

    #[test]
    fn ssim_identity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_image(&mut rng, 64, 64);
        assert_eq!(ssim_cropped(&x, &x, 50).unwrap(), 1.0);
    }

    #[test]
    fn ssim_inverted_contrast_is_low_and_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // magnitude image in [0, 1]
        let data: Vec<Complex64> = (0..64 * 64)
            .map(|_| Complex64::new(rng.random_range(0.0..1.0), 0.0))
            .collect();
        let x = ComplexImage::from_complex(64, 64, data.clone()).unwrap();
        let inv = ComplexImage::from_complex(
            64,
            64,
            data.iter().map(|v| Complex64::new(1.0 - v.re, 0.0)).collect(),
        )
        .unwrap();
        let mine = ssim_cropped(&x, &inv, 50).unwrap();
        let oracle = ssim_oracle(&x, &inv, 50);
        assert!((mine - oracle).abs() < 1e-9, "{mine} vs {oracle}");
        assert!(mine < 0.5, "inverted contrast SSIM {mine}");
    }

    #[test]
    fn ssim_crop_indexing_uses_exact_center() {
        // rows 75..=124 and cols 25..=74 of a 200x100 image; pixels outside
        // that window must not affect the score.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_image(&mut rng, 200, 100);
        let b = random_image(&mut rng, 200, 100);
        let base = ssim_cropped(&a, &b, 50).unwrap();

        let mut data = a.complex().to_vec();
        for r in 0..200 {
            for c in 0..100 {
                let inside = (75..125).contains(&r) && (25..75).contains(&c);
                if !inside {
                    data[r * 100 + c] = Complex64::new(999.0, -7.0);
                }
            }
        }
        let mangled = ComplexImage::from_complex(200, 100, data).unwrap();
        let after = ssim_cropped(&mangled, &b, 50).unwrap();
        assert_eq!(base, after);
        // and the window itself does matter
        let mut data_in = a.complex().to_vec();
        data_in[80 * 100 + 30] = Complex64::new(5.0, 0.0);
        let touched = ComplexImage::from_complex(200, 100, data_in).unwrap();
        assert_ne!(ssim_cropped(&touched, &b, 50).unwrap(), base);
    }

    #[test]
    fn ssim_crop_validation() {
        let x = ComplexImage::zeros(32, 32);
        assert!(ssim_cropped(&x, &x, 40).is_err());
        assert!(ssim_cropped(&x, &x, 4).is_err());
    }

    #[test]
    fn timing_sanity() {
        let t = time_reconstruction(
            || std::thread::sleep(std::time::Duration::from_millis(10)),
            3,
        )
        .unwrap();
        assert!((0.005..=0.05).contains(&t), "measured {t}");
        let single = time_reconstruction(|| 42, 1).unwrap();
        assert!(single >= 0.0);
        assert!(time_reconstruction(|| (), 0).is_err());
    }

    #[test]
    fn report_serializes_with_exact_field_names() {
        let rep = MetricReport {
            snr_db: 1.0,
            ssim: 0.5,
            nrmse: 0.25,
            recon_time_seconds: 0.125,
        };
        let json = serde_json::to_string(&rep).unwrap();
        assert_eq!(
            json,
            r#"{"snr_db":1.0,"ssim":0.5,"nrmse":0.25,"recon_time_seconds":0.125}"#
        );
    }
}
