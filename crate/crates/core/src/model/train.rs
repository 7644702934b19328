use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::TrainData;
use super::layer::{Layer, Mode};
use super::network::{accuracy_of, Network};
use super::optim::{sgd_step, PlateauSchedule, TrainConfig};
use crate::error::{LabError, Result};
use crate::numerics::RngStream;

/// Metrics at an epoch boundary, measured at the parameters reached after
/// `step` updates of the current call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub step: usize,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub losses: Vec<f64>,
    pub epochs: Vec<EpochStat>,
    pub total_steps: usize,
    /// Step of the best validation checkpoint, when validation data exists.
    pub best_val_step: Option<usize>,
    pub restored_best: bool,
}

impl TrainTrace {
    /// First step at which the training accuracy reached `threshold`.
    pub fn steps_to_threshold(&self, threshold: f64) -> Option<usize> {
        self.epochs.iter().find(|e| e.train_acc >= threshold).map(|e| e.step)
    }

    pub fn steps_to_thresholds(&self, thresholds: &[f64]) -> BTreeMap<String, Option<usize>> {
        thresholds
            .iter()
            .map(|&t| (format!("{t}"), self.steps_to_threshold(t)))
            .collect()
    }

    pub fn final_train_acc(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_acc)
    }

    /// `(step, train_acc)` pairs.
    pub fn train_curve(&self) -> Vec<(usize, f64)> {
        self.epochs.iter().map(|e| (e.step, e.train_acc)).collect()
    }
}

struct Recorder<'a> {
    network_val: Option<&'a super::data::Dataset>,
    schedule: PlateauSchedule,
    early_stop: bool,
    best: Option<(f64, usize, Vec<f64>)>,
    trace: TrainTrace,
}

impl Recorder<'_> {
    fn record(&mut self, net: &Network, step: usize, train_acc: f64) -> Result<()> {
        let val_acc = match self.network_val {
            Some(v) => Some(net.accuracy(&v.x, &v.y)?),
            None => None,
        };
        self.trace.epochs.push(EpochStat {
            step,
            train_acc,
            val_acc,
            learning_rate: self.schedule.learning_rate,
        });
        if let Some(acc) = val_acc {
            self.schedule.observe(1.0 - acc);
            let improved = self.best.as_ref().is_none_or(|(b, _, _)| acc > *b);
            if improved {
                let snapshot = if self.early_stop {
                    net.params().flat().to_vec()
                } else {
                    Vec::new()
                };
                self.best = Some((acc, step, snapshot));
            }
        }
        Ok(())
    }
}

/// Runs at most `config.max_steps` SGD steps on `data.train` with a fresh
/// zero velocity. Frozen segments receive no updates. With validation data
/// the learning rate is multiplied by `plateau_factor` after
/// `plateau_patience_epochs` epochs without improvement, and `early_stop`
/// restores the best-validation parameters at the end.
pub fn train(network: &mut Network, data: &TrainData, config: &TrainConfig, rng: &RngStream) -> Result<TrainTrace> {
    config.validate()?;
    let train_set = &data.train;
    if train_set.is_empty() {
        return Err(LabError::Config("empty training set".into()));
    }
    if config.max_steps == 0 {
        return Ok(TrainTrace::default());
    }
    let n = train_set.len();
    let batch = config.batch_size.resolve(n);
    let full = batch == n;
    let has_dropout = network
        .blocks()
        .iter()
        .flat_map(|b| &b.layers)
        .any(|l| matches!(l, Layer::Dropout { rate } if *rate > 0.0));
    // Full-batch without dropout: the training forward pass at step t already
    // gives the accuracy of the parameters after t updates.
    let reuse_forward = full && !has_dropout;

    let frozen: Vec<std::ops::Range<usize>> = network
        .frozen()
        .iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(id, _)| network.params().segment(id).range())
        .collect();
    let mut velocity = vec![0.0; network.params().dim()];
    let mut gen = rng.generator();
    let mut rec = Recorder {
        network_val: data.val.as_ref(),
        schedule: PlateauSchedule::new(config.learning_rate, config.plateau_factor, config.plateau_patience_epochs),
        early_stop: config.early_stop,
        best: None,
        trace: TrainTrace::default(),
    };

    let mut step = 0;
    if !reuse_forward {
        let acc = network.accuracy(&train_set.x, &train_set.y)?;
        rec.record(network, 0, acc)?;
    }
    let mut order: Vec<usize> = (0..n).collect();
    while step < config.max_steps {
        if full {
            let (loss, mut grads, probs) =
                network.loss_and_grads(&train_set.x, &train_set.y, config.weight_decay, Mode::Train, &mut gen)?;
            if reuse_forward {
                rec.record(network, step, accuracy_of(&probs, &train_set.y))?;
            }
            apply_update(network, &mut grads, &frozen, &mut velocity, rec.schedule.learning_rate, config.momentum);
            rec.trace.losses.push(loss);
            step += 1;
            if !reuse_forward {
                let acc = network.accuracy(&train_set.x, &train_set.y)?;
                rec.record(network, step, acc)?;
            }
        } else {
            order.shuffle(&mut gen);
            for chunk in order.chunks(batch) {
                if step >= config.max_steps {
                    break;
                }
                let mb = train_set.subset(chunk);
                let (loss, mut grads, _) =
                    network.loss_and_grads(&mb.x, &mb.y, config.weight_decay, Mode::Train, &mut gen)?;
                apply_update(network, &mut grads, &frozen, &mut velocity, rec.schedule.learning_rate, config.momentum);
                rec.trace.losses.push(loss);
                step += 1;
            }
            let acc = network.accuracy(&train_set.x, &train_set.y)?;
            rec.record(network, step, acc)?;
        }
    }
    if reuse_forward {
        let acc = network.accuracy(&train_set.x, &train_set.y)?;
        rec.record(network, step, acc)?;
    }
    if !network.params().flat().iter().all(|v| v.is_finite()) {
        return Err(LabError::NumericFailure("parameters became non-finite".into()));
    }
    rec.trace.total_steps = step;
    if let Some((_, best_step, snapshot)) = rec.best.take() {
        rec.trace.best_val_step = Some(best_step);
        if config.early_stop {
            network.params_mut().set_flat(&snapshot)?;
            rec.trace.restored_best = true;
        }
    }
    Ok(rec.trace)
}

fn apply_update(
    network: &mut Network,
    grads: &mut [f64],
    frozen: &[std::ops::Range<usize>],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
) {
    for r in frozen {
        grads[r.clone()].iter_mut().for_each(|g| *g = 0.0);
    }
    sgd_step(network.params_mut().flat_mut(), grads, velocity, lr, momentum);
}
