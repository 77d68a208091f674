//! Linear warmup learning-rate schedule: 0 to base_lr over the first 5% of
//! steps, constant base_lr afterwards.

use super::tensor::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct WarmupSchedule {
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub base_lr: Float,
}

impl WarmupSchedule {
    /// warmup_steps = ceil(0.05 * total_steps).
    pub fn new(total_steps: usize, base_lr: Float) -> Self {
        let warmup_steps = total_steps.div_ceil(20);
        WarmupSchedule {
            total_steps,
            warmup_steps,
            base_lr,
        }
    }

    pub fn with_warmup(total_steps: usize, warmup_steps: usize, base_lr: Float) -> Self {
        assert!(warmup_steps <= total_steps);
        WarmupSchedule {
            total_steps,
            warmup_steps,
            base_lr,
        }
    }

    /// Learning rate at a step in [0, total_steps].
    pub fn lr_at(&self, step: usize) -> Float {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.base_lr
        } else {
            self.base_lr * step as Float / self.warmup_steps as Float
        }
    }
}
