use alloc::format;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup from zero to `peak_lr`, then cosine decay to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub warmup_epochs: usize,
    pub peak_lr: f64,
    pub total_epochs: usize,
    pub steps_per_epoch: usize,
}

impl LrSchedule {
    /// Learning rate at a (fractional) epoch in `[0, total_epochs]`.
    pub fn lr_at(&self, epoch: f64) -> Result<f64> {
        let total = self.total_epochs as f64;
        if !(0.0..=total).contains(&epoch) {
            return Err(Error::Argument(format!(
                "epoch {epoch} outside schedule range [0, {total}]"
            )));
        }
        let warmup = self.warmup_epochs.min(self.total_epochs) as f64;
        if epoch < warmup {
            return Ok(self.peak_lr * (epoch / warmup));
        }
        let decay = total - warmup;
        if decay == 0.0 {
            return Ok(if epoch < total { self.peak_lr } else { 0.0 });
        }
        let t = (epoch - warmup) / decay;
        Ok(self.peak_lr * 0.5 * (1.0 + libm::cos(PI * t)))
    }

    /// Learning rate for a global optimizer step (`step / steps_per_epoch`).
    pub fn lr_at_step(&self, step: usize) -> Result<f64> {
        if self.steps_per_epoch == 0 {
            return Err(Error::Argument("steps_per_epoch must be positive".into()));
        }
        self.lr_at(step as f64 / self.steps_per_epoch as f64)
    }
}
