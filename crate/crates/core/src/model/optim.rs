use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Minibatch size: the whole training set per step, or a fixed count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSize {
    Full(FullBatch),
    Mini(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullBatch {
    Full,
}

impl BatchSize {
    pub const FULL: BatchSize = BatchSize::Full(FullBatch::Full);

    pub fn resolve(self, n: usize) -> usize {
        match self {
            BatchSize::Full(_) => n,
            BatchSize::Mini(b) => b.min(n),
        }
    }

    pub fn is_full(self) -> bool {
        matches!(self, BatchSize::Full(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: BatchSize,
    pub max_steps: usize,
    pub plateau_patience_epochs: usize,
    pub plateau_factor: f64,
    pub val_fraction: f64,
    pub early_stop: bool,
}

impl Default for TrainConfig {
    /// Image protocol defaults: SGD 0.003 with momentum 0.9, batch 256,
    /// halving after 20 epochs without validation improvement.
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.003,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: BatchSize::Mini(256),
            max_steps: 1000,
            plateau_patience_epochs: 20,
            plateau_factor: 0.5,
            val_fraction: 0.1,
            early_stop: true,
        }
    }
}

impl TrainConfig {
    /// Full-batch gradient descent at lr 0.05 used for the synthetic MLP.
    pub fn synthetic() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: BatchSize::FULL,
            max_steps: 200,
            plateau_patience_epochs: 20,
            plateau_factor: 0.5,
            val_fraction: 0.0,
            early_stop: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be >= 0", self.weight_decay));
        }
        if self.batch_size == BatchSize::Mini(0) {
            return bad("batch_size must be positive".into());
        }
        if self.plateau_patience_epochs == 0 {
            return bad("plateau_patience_epochs must be positive".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad(format!("plateau_factor {} outside (0, 1)", self.plateau_factor));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} outside [0, 1)", self.val_fraction));
        }
        Ok(())
    }
}

/// `v <- momentum * v - lr * g; w <- w + v`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], learning_rate: f64, momentum: f64) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), velocity.len());
    for ((w, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - learning_rate * g;
        *w += *v;
    }
}

/// Halves (by `factor`) the learning rate after `patience` epochs without a
/// strict improvement of the monitored error.
#[derive(Clone, Debug)]
pub struct PlateauSchedule {
    pub learning_rate: f64,
    factor: f64,
    patience: usize,
    best: f64,
    stale: usize,
}

impl PlateauSchedule {
    pub fn new(learning_rate: f64, factor: f64, patience: usize) -> Self {
        PlateauSchedule {
            learning_rate,
            factor,
            patience,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Records one epoch's error; returns true if the rate was decreased.
    pub fn observe(&mut self, error: f64) -> bool {
        if error < self.best {
            self.best = error;
            self.stale = 0;
            return false;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.learning_rate *= self.factor;
            self.stale = 0;
            return true;
        }
        false
    }
}
