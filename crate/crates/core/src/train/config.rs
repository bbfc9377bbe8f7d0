use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{AdamConfig, ModelConfig};
use crate::{Error, Result};

/// One schedule entry: targets use `sigma_px` up to and including `until_epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaStep {
    pub until_epoch: usize,
    pub sigma_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub sigma_schedule: Vec<SigmaStep>,
    pub augment_enabled: bool,
    /// Share of configurations kept aside for the holdout loss; never trained on.
    pub holdout_fraction: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 100,
            batch_size: 8,
            learning_rate: 1e-3,
            weight_decay: 1e-6,
            sigma_schedule: vec![SigmaStep { until_epoch: 100, sigma_px: 3.0 }],
            augment_enabled: true,
            holdout_fraction: 0.1,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// σ = 3 for the first half of the epochs and 1.5 afterwards.
    pub fn annealed(epochs: usize) -> Self {
        let half = epochs / 2;
        let mut c = Self { epochs, ..Self::default() };
        c.sigma_schedule = vec![SigmaStep { until_epoch: half, sigma_px: 3.0 }, SigmaStep { until_epoch: epochs, sigma_px: 1.5 }];
        c
    }

    /// Constant σ = 3.
    pub fn constant(epochs: usize) -> Self {
        Self { epochs, sigma_schedule: vec![SigmaStep { until_epoch: epochs, sigma_px: 3.0 }], ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)");
        }
        if self.sigma_schedule.is_empty() {
            return bad("sigma_schedule is empty");
        }
        for pair in self.sigma_schedule.windows(2) {
            if pair[1].until_epoch <= pair[0].until_epoch {
                return bad("sigma_schedule epochs must be strictly increasing");
            }
        }
        if self.sigma_schedule.iter().any(|s| !(s.sigma_px > 0.0)) {
            return bad("sigma_schedule values must be positive");
        }
        if self.sigma_schedule.last().unwrap().until_epoch < self.epochs {
            return bad("sigma_schedule does not cover every epoch");
        }
        self.model.validate()
    }

    /// Target σ for a 1-based epoch.
    pub fn sigma_at(&self, epoch: usize) -> f64 {
        self.sigma_schedule
            .iter()
            .find(|s| epoch <= s.until_epoch)
            .or(self.sigma_schedule.last())
            .map(|s| s.sigma_px)
            .expect("validated schedule")
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        c.validate()?;
        Ok(c)
    }
}
