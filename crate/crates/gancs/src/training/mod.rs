//! Adversarial training: the least-squares discriminator cost, the mixed
//! data-consistency + pixel + adversarial generator cost, Adam, and the
//! mini-batch stochastic alternating minimization loop (sample, one
//! discriminator step, one generator step).

mod loop_;
mod losses;
mod optimizer;

pub use loop_::{train, NoHooks, TrainHooks, TrainOutcome};
pub use losses::{d_loss, g_loss, DLossParts, GLossParts};
pub use optimizer::{adam_step, effective_lr};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    /// Data consistency + eta * L1 pixel + lambda * adversarial.
    Gancs,
    /// eta * L1 pixel term only.
    L1,
    /// Data consistency + eta * squared-L2 pixel term.
    L2,
    /// Data consistency + lambda * adversarial (eta = 0).
    GanOnly,
}

impl LossMode {
    pub fn uses_gan(self) -> bool {
        matches!(self, LossMode::Gancs | LossMode::GanOnly)
    }

    /// Per-term weights `(w_dc, w_pixel, pixel_is_squared_l2, w_gan)`.
    pub fn weights(self, lambda: f64, eta: f64) -> (f64, f64, bool, f64) {
        match self {
            LossMode::Gancs => (1.0, eta, false, lambda),
            LossMode::L1 => (0.0, eta, false, 0.0),
            LossMode::L2 => (1.0, eta, true, 0.0),
            LossMode::GanOnly => (1.0, 0.0, false, lambda),
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gancs" => Ok(LossMode::Gancs),
            "l1" => Ok(LossMode::L1),
            "l2" => Ok(LossMode::L2),
            "gan_only" | "gan-only" => Ok(LossMode::GanOnly),
            other => Err(Error::invalid(format!("unknown loss mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DcMode {
    /// No projections; data consistency enters through the loss only.
    Soft,
    /// One hard projection of the final output.
    Hard,
    /// The generator config's interleaved projection count.
    Interleaved,
}

impl std::str::FromStr for DcMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(DcMode::Soft),
            "hard" => Ok(DcMode::Hard),
            "interleaved" => Ok(DcMode::Interleaved),
            other => Err(Error::invalid(format!("unknown dc mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Adversarial-term weight.
    pub lambda: f64,
    /// Pixel-term weight.
    pub eta: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate halves every this many iterations.
    pub lr_halve_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub loss_mode: LossMode,
    pub seed: u64,
    pub dc_mode: DcMode,
    /// Iterations with the adversarial term disabled (and no D updates).
    pub gan_warmup_iters: usize,
    /// Checkpoint interval in iterations; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Gaussian noise added to the simulated measurements (0 = off).
    pub noise_sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::paper_setup()
    }
}

impl TrainConfig {
    /// The lambda = 0.1 operating point (eta is unstated there; 1.0 keeps
    /// the pixel term dominant).
    pub fn paper_setup() -> Self {
        TrainConfig {
            lambda: 0.1,
            eta: 1.0,
            batch_size: 8,
            learning_rate: 1e-5,
            lr_halve_every: 5000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 20,
            loss_mode: LossMode::Gancs,
            seed: 0,
            dc_mode: DcMode::Hard,
            gan_warmup_iters: 0,
            checkpoint_every: 0,
            noise_sigma: 0.0,
        }
    }

    /// The lambda = eta = 10 operating point reported alongside the
    /// qualitative comparisons.
    pub fn paper_results() -> Self {
        TrainConfig {
            lambda: 10.0,
            eta: 10.0,
            ..TrainConfig::paper_setup()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.eta < 0.0 {
            return Err(Error::invalid("lambda and eta must be >= 0"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid(
                "batch size must be >= 2 (batch normalization)",
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        if self.lr_halve_every == 0 {
            return Err(Error::invalid("lr_halve_every must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid("Adam epsilon must be > 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::invalid("noise sigma must be >= 0"));
        }
        Ok(())
    }
}

/// Per-iteration loss components. The pixel slot holds the L1 value except
/// in L2 mode, where it holds the squared-L2 pixel value. Totals recombine
/// the raw components with the mode weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub d_loss_real: f64,
    pub d_loss_fake: f64,
    pub g_gan_loss: f64,
    pub g_l1_loss: f64,
    pub g_datacons_loss: f64,
    pub total_g: f64,
    pub total_d: f64,
    pub lr: f64,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str = "iter,d_real,d_fake,g_gan,g_l1,g_dc,g_total,d_total,lr";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.d_loss_real,
            self.d_loss_fake,
            self.g_gan_loss,
            self.g_l1_loss,
            self.g_datacons_loss,
            self.total_g,
            self.total_d,
            self.lr
        )
    }

    pub fn all_finite(&self) -> bool {
        [
            self.d_loss_real,
            self.d_loss_fake,
            self.g_gan_loss,
            self.g_l1_loss,
            self.g_datacons_loss,
            self.total_g,
            self.total_d,
            self.lr,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::paper_setup().validate().is_ok());
        assert!(TrainConfig::paper_results().validate().is_ok());
        let mut bad = TrainConfig::paper_setup();
        bad.batch_size = 1;
        assert!(bad.validate().is_err());
        let mut bad2 = TrainConfig::paper_setup();
        bad2.lambda = -1.0;
        assert!(bad2.validate().is_err());
    }

    #[test]
    fn presets_pin_the_two_reported_operating_points() {
        let a = TrainConfig::paper_setup();
        assert_eq!(a.lambda, 0.1);
        assert_eq!(a.learning_rate, 1e-5);
        assert_eq!(a.batch_size, 8);
        assert_eq!(a.lr_halve_every, 5000);
        assert_eq!(a.adam_beta1, 0.9);
        assert_eq!(a.epochs, 20);
        let b = TrainConfig::paper_results();
        assert_eq!((b.lambda, b.eta), (10.0, 10.0));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(LossMode::from_str("gancs").unwrap(), LossMode::Gancs);
        assert_eq!(LossMode::from_str("gan_only").unwrap(), LossMode::GanOnly);
        assert!(LossMode::from_str("nope").is_err());
        assert_eq!(DcMode::from_str("hard").unwrap(), DcMode::Hard);
    }

    #[test]
    fn csv_row_shape() {
        let rec = LossRecord {
            iteration: 3,
            d_loss_real: 0.5,
            d_loss_fake: 0.25,
            g_gan_loss: 1.0,
            g_l1_loss: 2.0,
            g_datacons_loss: 0.125,
            total_g: 3.0,
            total_d: 0.75,
            lr: 1e-5,
        };
        assert_eq!(rec.to_csv_row().split(',').count(), 9);
        assert_eq!(LossRecord::CSV_HEADER.split(',').count(), 9);
        assert!(rec.all_finite());
    }
}
