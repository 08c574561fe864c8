use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The single parameter group a pipeline is allowed to update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    Base,
    Lora,
    Projection,
    JointLora,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub group: ParamGroup,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Random subset of the training data used per run, if set.
    #[serde(default)]
    pub max_examples: Option<usize>,
    pub seed: u64,
    /// Global gradient-norm clip, if set.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Decay the learning rate linearly to zero over the run.
    #[serde(default)]
    pub lr_decay: bool,
}

impl TrainConfig {
    /// Adapter recipe of the 1B reference setup: Adam at 5e-5, batch 3, one epoch.
    pub fn reference_lora() -> Self {
        Self {
            group: ParamGroup::Lora,
            lr: 5e-5,
            batch_size: 3,
            epochs: 1,
            max_examples: None,
            seed: 0,
            grad_clip: None,
            lr_decay: false,
        }
    }

    /// Projection recipe of the 1B reference setup: 5e-4, one epoch over
    /// 10,000 random examples.
    pub fn reference_projection() -> Self {
        Self {
            group: ParamGroup::Projection,
            lr: 5e-4,
            max_examples: Some(10_000),
            ..Self::reference_lora()
        }
    }

    /// Base-model copy pretraining for the desk model. Each epoch draws
    /// `max_examples` fresh copy examples.
    pub fn desk_pretrain() -> Self {
        Self {
            group: ParamGroup::Base,
            lr: 1e-3,
            batch_size: 8,
            epochs: 30,
            max_examples: Some(2000),
            seed: 0,
            grad_clip: Some(1.0),
            lr_decay: false,
        }
    }

    pub fn desk_lora() -> Self {
        Self {
            group: ParamGroup::Lora,
            lr: 5e-4,
            batch_size: 3,
            epochs: 2,
            max_examples: None,
            seed: 0,
            grad_clip: Some(1.0),
            lr_decay: false,
        }
    }

    pub fn desk_joint() -> Self {
        Self {
            group: ParamGroup::JointLora,
            ..Self::desk_lora()
        }
    }

    pub fn desk_projection() -> Self {
        Self {
            group: ParamGroup::Projection,
            lr: 2e-2,
            batch_size: 3,
            epochs: 10,
            max_examples: None,
            seed: 0,
            grad_clip: Some(1.0),
            lr_decay: true,
        }
    }

    /// Learning rate for optimizer step `step` of `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if self.lr_decay && total > 0 {
            self.lr * (1.0 - step.min(total) as f64 / total as f64)
        } else {
            self.lr
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.max_examples == Some(0) {
            return Err(Error::Config("max_examples must be at least 1 when set".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub(crate) fn expect_group(&self, group: ParamGroup) -> Result<()> {
        self.validate()?;
        if self.group != group {
            return Err(Error::Config(format!(
                "this pipeline trains the {group:?} group, config selects {:?}",
                self.group
            )));
        }
        Ok(())
    }
}

/// Loss trace of one training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub examples_seen: usize,
    /// Held-out metric after each epoch, where the pipeline computes one.
    #[serde(default)]
    pub eval_trace: Vec<f64>,
}

impl TrainReport {
    pub fn steps(&self) -> usize {
        self.losses.len()
    }

    /// Mean of the first and last `window` losses.
    pub fn smoothed_ends(&self, window: usize) -> Option<(f64, f64)> {
        let n = self.losses.len();
        if n == 0 || window == 0 {
            return None;
        }
        let w = window.min(n);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        Some((mean(&self.losses[..w]), mean(&self.losses[n - w..])))
    }
}
