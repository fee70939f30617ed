//! Desk-scale check of the least-squares GAN equilibrium on tabular
//! distributions: the closed-form optimal discriminator and the Pearson
//! chi-squared divergence it induces.

use crate::error::{Error, Result};

/// A probability vector over a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDistribution {
    probs: Vec<f64>,
}

impl TabularDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("probabilities must be finite and >= 0"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "probabilities must sum to 1 (got {sum})"
            )));
        }
        Ok(TabularDistribution { probs })
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

fn check_supports(p_x: &TabularDistribution, p_g: &TabularDistribution) -> Result<()> {
    if p_x.support_size() != p_g.support_size() {
        return Err(Error::invalid(format!(
            "support sizes differ: {} vs {}",
            p_x.support_size(),
            p_g.support_size()
        )));
    }
    Ok(())
}

/// The discriminator minimizing the least-squares objective for fixed
/// generator: `p_x / (p_x + p_g)` pointwise, 0.5 where both vanish.
pub fn optimal_discriminator(
    p_x: &TabularDistribution,
    p_g: &TabularDistribution,
) -> Result<Vec<f64>> {
    check_supports(p_x, p_g)?;
    Ok(p_x
        .probs()
        .iter()
        .zip(p_g.probs())
        .map(|(&a, &b)| if a + b == 0.0 { 0.5 } else { a / (a + b) })
        .collect())
}

/// Least-squares discriminator objective specialized to tabular form:
/// `sum p_x(v) (1 - d(v))^2 + sum p_g(v) d(v)^2`.
pub fn lsgan_d_objective(
    p_x: &TabularDistribution,
    p_g: &TabularDistribution,
    d: &[f64],
) -> Result<f64> {
    check_supports(p_x, p_g)?;
    if d.len() != p_x.support_size() {
        return Err(Error::invalid("discriminator vector length mismatch"));
    }
    Ok(p_x
        .probs()
        .iter()
        .zip(p_g.probs())
        .zip(d)
        .map(|((&a, &b), &dv)| a * (1.0 - dv) * (1.0 - dv) + b * dv * dv)
        .sum())
}

/// Pearson chi-squared divergence in the form the LS game minimizes:
/// `sum (2 p_g - (p_x + p_g))^2 / (p_x + p_g)`, with 0/0 terms dropped.
pub fn pearson_chi2(p_x: &TabularDistribution, p_g: &TabularDistribution) -> Result<f64> {
    check_supports(p_x, p_g)?;
    Ok(p_x
        .probs()
        .iter()
        .zip(p_g.probs())
        .map(|(&a, &b)| {
            let denom = a + b;
            if denom == 0.0 {
                0.0
            } else {
                let num = 2.0 * b - denom;
                num * num / denom
            }
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> TabularDistribution {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        // renormalize and absorb rounding into the last entry
        let mut probs: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let s: f64 = probs.iter().sum();
        let last = probs.len() - 1;
        probs[last] += 1.0 - s;
        TabularDistribution::new(probs).unwrap()
    }

    #[test]
    fn validation() {
        assert!(TabularDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(TabularDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(TabularDistribution::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn equal_distributions_give_half() {
        let p = TabularDistribution::new(vec![0.1, 0.4, 0.5]).unwrap();
        let d = optimal_discriminator(&p, &p).unwrap();
        assert!(d.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert!(pearson_chi2(&p, &p).unwrap() < 1e-15);
        // objective at D* with p_g = p_x is exactly 1/2
        let obj = lsgan_d_objective(&p, &p, &d).unwrap();
        assert!((obj - 0.5).abs() < 1e-12);
    }

    #[test]
    fn disjoint_supports() {
        let px = TabularDistribution::new(vec![1.0, 0.0]).unwrap();
        let pg = TabularDistribution::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(optimal_discriminator(&px, &pg).unwrap(), vec![1.0, 0.0]);
        assert!((pearson_chi2(&px, &pg).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_discriminators() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let px = random_distribution(&mut rng, 6);
        let pg = random_distribution(&mut rng, 6);
        let ones = vec![1.0; 6];
        let zeros = vec![0.0; 6];
        assert!((lsgan_d_objective(&px, &pg, &ones).unwrap() - 1.0).abs() < 1e-12);
        assert!((lsgan_d_objective(&px, &pg, &zeros).unwrap() - 1.0).abs() < 1e-12);
    }

    /// Brute-force grid search over d in [0,1]^n at resolution 1e-3. The
    /// objective separates per entry, so the per-entry argmin over the grid
    /// is the global product-grid argmin.
    pub(crate) fn grid_optimal_d(px: &TabularDistribution, pg: &TabularDistribution) -> Vec<f64> {
        (0..px.support_size())
            .map(|i| {
                let a = px.probs()[i];
                let b = pg.probs()[i];
                let mut best = (f64::INFINITY, 0.0);
                for step in 0..=1000 {
                    let d = step as f64 / 1000.0;
                    let v = a * (1.0 - d) * (1.0 - d) + b * d * d;
                    if v < best.0 {
                        best = (v, d);
                    }
                }
                best.1
            })
            .collect()
    }

    #[test]
    fn optimal_discriminator_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let px = random_distribution(&mut rng, 8);
            let pg = random_distribution(&mut rng, 8);
            let analytic = optimal_discriminator(&px, &pg).unwrap();
            let grid = grid_optimal_d(&px, &pg);
            for (a, g) in analytic.iter().zip(&grid) {
                assert!((a - g).abs() <= 1e-3, "{a} vs {g}");
            }
        }
    }

    #[test]
    fn optimal_discriminator_beats_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let px = random_distribution(&mut rng, 8);
        let pg = random_distribution(&mut rng, 8);
        let dstar = optimal_discriminator(&px, &pg).unwrap();
        let best = lsgan_d_objective(&px, &pg, &dstar).unwrap();
        for _ in 0..1000 {
            let d: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
            assert!(lsgan_d_objective(&px, &pg, &d).unwrap() >= best - 1e-12);
        }
    }

    #[test]
    fn chi2_monotone_along_interpolation() {
        // p_g(t) = (1-t) p_x + t q moves away from p_x as t grows
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let px = random_distribution(&mut rng, 5);
        let q = random_distribution(&mut rng, 5);
        let mut last = -1.0;
        for step in 0..=10 {
            let t = step as f64 / 10.0;
            let probs: Vec<f64> = px
                .probs()
                .iter()
                .zip(q.probs())
                .map(|(&a, &b)| (1.0 - t) * a + t * b)
                .collect();
            let pg = TabularDistribution::new(probs).unwrap();
            let v = pearson_chi2(&px, &pg).unwrap();
            assert!(v >= last - 1e-12, "chi2 not monotone at t={t}");
            last = v;
        }
    }

    /// Generator-side objective at the optimal discriminator, minimized over
    /// a simplex grid; the unique minimizer must be p_g = p_x.
    #[test]
    fn generator_objective_minimized_at_data_distribution() {
        let px = TabularDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let lambda = 1.0;
        let g_obj = |pg: &TabularDistribution| -> f64 {
            let dstar = optimal_discriminator(&px, pg).unwrap();
            lambda
                * pg.probs()
                    .iter()
                    .zip(&dstar)
                    .map(|(&p, &d)| p * (1.0 - d) * (1.0 - d))
                    .sum::<f64>()
        };
        // grid over the 2-simplex in steps of 0.05 (p_x lies on this grid)
        let mut best = (f64::INFINITY, vec![]);
        let steps = 20;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let a = i as f64 / steps as f64;
                let b = j as f64 / steps as f64;
                let c = 1.0 - a - b;
                let pg = TabularDistribution::new(vec![a, b, c.max(0.0).min(1.0)])
                    .unwrap_or_else(|_| TabularDistribution::new(vec![a, b, 1.0 - a - b]).unwrap());
                let v = g_obj(&pg);
                if v < best.0 {
                    best = (v, pg.probs().to_vec());
                }
            }
        }
        assert_eq!(best.1, vec![0.5, 0.3, 0.2]);
        // uniqueness on the grid: every other grid point is strictly worse
        let best_val = best.0;
        let mut second = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let a = i as f64 / steps as f64;
                let b = j as f64 / steps as f64;
                let probs = vec![a, b, 1.0 - a - b];
                if probs == vec![0.5, 0.3, 0.2] {
                    continue;
                }
                if let Ok(pg) = TabularDistribution::new(probs) {
                    second = second.min(g_obj(&pg));
                }
            }
        }
        assert!(second > best_val + 1e-6);
    }
}
