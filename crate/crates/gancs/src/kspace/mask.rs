//! Variable-density sampling mask generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::types::SamplingMask;
use crate::error::{Error, Result};

/// Draw a random mask whose inclusion probability decays with distance from
/// the k-space center as `(1 - r/r_max)^density_power`.
///
/// A fully sampled square of side `ceil(0.04 * min(height, width))` around
/// the center is always included. The exact sample count
/// `round(fraction * height * width)` is met by ranking weighted draws
/// (key `u^(1/p)` per location, the classic weighted-sampling trick) and
/// keeping the strongest ones, so higher-probability locations win ties for
/// the remaining budget. Deterministic for a fixed seed.
pub fn make_vardens_mask(
    height: usize,
    width: usize,
    fraction: f64,
    density_power: f64,
    seed: u64,
) -> Result<SamplingMask> {
    if height < 4 || width < 4 {
        return Err(Error::invalid("mask dimensions must be at least 4x4"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "sampling fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if !(density_power > 0.0) {
        return Err(Error::invalid("density_power must be > 0"));
    }

    let n = height * width;
    let target = (fraction * n as f64).round() as usize;

    // fully-sampled center square
    let side = (0.04 * height.min(width) as f64).ceil() as usize;
    let cy = height / 2;
    let cx = width / 2;
    let r0 = cy - (side - 1) / 2;
    let c0 = cx - (side - 1) / 2;
    let center_count = side * side;
    if center_count > target {
        return Err(Error::invalid(format!(
            "fully-sampled center ({center_count} points) exceeds the sampling budget ({target})"
        )));
    }

    let r_max = {
        let corners = [
            (0.0, 0.0),
            (0.0, (width - 1) as f64),
            ((height - 1) as f64, 0.0),
            ((height - 1) as f64, (width - 1) as f64),
        ];
        corners
            .iter()
            .map(|&(r, c)| ((r - cy as f64).powi(2) + (c - cx as f64).powi(2)).sqrt())
            .fold(0.0_f64, f64::max)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indicator = vec![0u8; n];
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(n - center_count);
    for row in 0..height {
        for col in 0..width {
            let u: f64 = rng.random();
            let idx = row * width + col;
            let in_center =
                row >= r0 && row < r0 + side && col >= c0 && col < c0 + side;
            if in_center {
                indicator[idx] = 1;
                continue;
            }
            let r = ((row as f64 - cy as f64).powi(2) + (col as f64 - cx as f64).powi(2)).sqrt();
            let p = (1.0 - r / r_max).max(0.0).powf(density_power);
            // u^(1/p): 0 when p == 0, approaches 1 as p grows
            let key = if p > 0.0 { u.powf(1.0 / p) } else { 0.0 };
            keyed.push((key, idx));
        }
    }
    keyed.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, idx) in keyed.iter().take(target - center_count) {
        indicator[idx] = 1;
    }

    Ok(SamplingMask::new_unchecked(
        height,
        width,
        indicator,
        fraction,
        density_power,
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_count_at_paper_fraction() {
        let m = make_vardens_mask(200, 100, 0.20, 3.0, 7).unwrap();
        assert_eq!(m.count_sampled(), 4000);
    }

    #[test]
    fn full_fraction_gives_all_ones() {
        let m = make_vardens_mask(64, 64, 1.0, 3.0, 0).unwrap();
        assert!(m.indicator().iter().all(|&b| b == 1));
    }

    #[test]
    fn sampled_points_sit_closer_to_center() {
        let m = make_vardens_mask(64, 64, 0.20, 3.0, 0).unwrap();
        let (cy, cx) = (32.0, 32.0);
        let mut sampled = (0.0, 0usize);
        let mut unsampled = (0.0, 0usize);
        for row in 0..64 {
            for col in 0..64 {
                let r = ((row as f64 - cy).powi(2) + (col as f64 - cx).powi(2)).sqrt();
                if m.is_sampled(row, col) {
                    sampled.0 += r;
                    sampled.1 += 1;
                } else {
                    unsampled.0 += r;
                    unsampled.1 += 1;
                }
            }
        }
        let mean_s = sampled.0 / sampled.1 as f64;
        let mean_u = unsampled.0 / unsampled.1 as f64;
        assert!(
            mean_s < mean_u,
            "sampled mean radius {mean_s} vs unsampled {mean_u}"
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_vardens_mask(48, 40, 0.25, 3.0, 99).unwrap();
        let b = make_vardens_mask(48, 40, 0.25, 3.0, 99).unwrap();
        assert_eq!(a, b);
        let c = make_vardens_mask(48, 40, 0.25, 3.0, 100).unwrap();
        assert_ne!(a.indicator(), c.indicator());
    }

    #[test]
    fn center_square_always_sampled() {
        let m = make_vardens_mask(100, 100, 0.05, 8.0, 3).unwrap();
        let side = 4; // ceil(0.04 * 100)
        let r0 = 50 - (side - 1) / 2;
        for r in r0..r0 + side {
            for c in r0..r0 + side {
                assert!(m.is_sampled(r, c), "center point ({r},{c}) unsampled");
            }
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(make_vardens_mask(64, 64, 0.0, 3.0, 0).is_err());
        assert!(make_vardens_mask(64, 64, 1.5, 3.0, 0).is_err());
        assert!(make_vardens_mask(2, 64, 0.5, 3.0, 0).is_err());
        // center square larger than the whole budget
        assert!(make_vardens_mask(100, 100, 0.001, 3.0, 0).is_err());
    }
}
