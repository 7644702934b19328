//! Driving one regime end to end on one dataset.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::layerwise::{lw_round, record_init_scales, rescale_all};
use super::mask::{apply_reinit, mask_fc, mask_fixed, mask_random, mask_smallest, Mask};
use super::schedule::{make_schedule, Method, ReinitPlan};
use crate::error::Result;
use crate::model::{train, ArchSpec, Dataset, Network, TrainConfig, TrainData, TrainTrace};
use crate::numerics::{RngStream, Tensor};

/// Size of the fixed calibration sample used for the lambda statistics.
pub const STATS_SAMPLE: usize = 256;

/// Thresholds recorded in every round's `steps_to` map.
pub const SPEED_THRESHOLDS: [f64; 3] = [0.9, 0.99, 1.0];

/// Held-out scoring. The training loop never sees an evaluator, only the
/// driver, and only after a round has finished.
pub trait Evaluator {
    fn accuracy(&self, network: &Network) -> Result<f64>;
}

impl Evaluator for Dataset {
    fn accuracy(&self, network: &Network) -> Result<f64> {
        network.accuracy(&self.x, &self.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReinitEvent {
    /// Round after which (LW: before which) the update was applied.
    pub round: usize,
    pub count: usize,
    pub digest: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub index: usize,
    pub kept_block: usize,
    pub steps: usize,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub test_acc: f64,
    pub steps_to: BTreeMap<String, Option<usize>>,
    pub train_curve: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub method: Method,
    pub rounds: Vec<RoundMetrics>,
    pub traces: Vec<TrainTrace>,
    pub reinits: Vec<ReinitEvent>,
    pub final_train_acc: f64,
    pub final_val_acc: Option<f64>,
    pub final_test_acc: f64,
    pub total_steps: usize,
    pub network: Network,
    pub data: TrainData,
    /// The fixed calibration sample drawn from the training split.
    pub sample: Tensor,
}

impl RunOutcome {
    /// Whether every round's reinitialization used the same mask.
    pub fn single_mask(&self) -> bool {
        self.reinits.windows(2).all(|w| w[0].digest == w[1].digest)
    }
}

/// Mask for a mask method, evaluated on the parameters trained so far.
fn method_mask(
    method: Method,
    network: &Network,
    plan: &ReinitPlan,
    fixed: &Option<Mask>,
    rng: &RngStream,
) -> Result<Mask> {
    let d = network.params().dim();
    match method {
        Method::Welsr => mask_random(d, plan.fraction, &rng.named("mask")),
        Method::Wels => Ok(fixed.clone().expect("fixed mask drawn up front")),
        Method::Dsd => mask_smallest(network.params().flat(), plan.fraction),
        Method::Fc => mask_fc(network),
        _ => unreachable!("{method} does not use a mask"),
    }
}

/// Trains `arch` on `train_set` under `plan`, seeded entirely by `seed`.
///
/// The validation split and the calibration sample are drawn once and
/// shared by every round. Each round is a fresh [`train`] call, so momentum
/// and the learning rate start over at round boundaries.
pub fn run_method(
    plan: &ReinitPlan,
    arch: &ArchSpec,
    train_set: &Dataset,
    test: &dyn Evaluator,
    config: &TrainConfig,
    seed: u64,
) -> Result<RunOutcome> {
    let schedule = make_schedule(plan)?;
    config.validate()?;
    let root = RngStream::root(seed);
    let mut network = Network::build(arch, &root.named("init"))?;
    record_init_scales(&mut network)?;

    let (train_part, val) = train_set.split_validation(config.val_fraction, &root.named("split"))?;
    let data = TrainData { train: train_part, val };
    let sample: Tensor = data.train.sample(STATS_SAMPLE, &root.named("stats-sample")).x;
    let fixed = if plan.method == Method::Wels {
        Some(mask_fixed(network.params().dim(), plan.fraction, &root.named("wels-mask"))?)
    } else {
        None
    };

    let mut rounds = Vec::with_capacity(schedule.len());
    let mut traces = Vec::with_capacity(schedule.len());
    let mut reinits = Vec::new();
    let last = schedule.len() - 1;
    for round in &schedule {
        let rng = root.named("round").derive(round.index as u64);
        let trace = match plan.method {
            Method::Lw => {
                let (trace, step) =
                    lw_round(&mut network, round, &plan.lw_flags, &sample, &data, config, &rng)?;
                reinits.push(ReinitEvent {
                    round: round.index,
                    count: step.mask.count(),
                    digest: step.mask.digest(),
                });
                trace
            }
            _ => {
                let cfg = TrainConfig {
                    max_steps: round.steps,
                    ..config.clone()
                };
                train(&mut network, &data, &cfg, &rng.named("train"))?
            }
        };

        let train_acc = network.accuracy(&data.train.x, &data.train.y)?;
        let val_acc = match &data.val {
            Some(v) => Some(network.accuracy(&v.x, &v.y)?),
            None => None,
        };
        rounds.push(RoundMetrics {
            index: round.index,
            kept_block: round.kept_block,
            steps: trace.total_steps,
            train_acc,
            val_acc,
            test_acc: test.accuracy(&network)?,
            steps_to: trace.steps_to_thresholds(&SPEED_THRESHOLDS),
            train_curve: trace.train_curve(),
        });
        traces.push(trace);

        if round.index == last {
            break;
        }
        if plan.method.uses_mask() {
            let mask = method_mask(plan.method, &network, plan, &fixed, &rng)?;
            let eta = network.draw_init(&rng.named("eta"))?;
            apply_reinit(network.params_mut(), &mask, &eta)?;
            reinits.push(ReinitEvent {
                round: round.index,
                count: mask.count(),
                digest: mask.digest(),
            });
        } else if plan.method == Method::RescaleOnly {
            rescale_all(&mut network)?;
        }
    }

    let final_round = rounds.last().expect("at least one round");
    Ok(RunOutcome {
        method: plan.method,
        final_train_acc: final_round.train_acc,
        final_val_acc: final_round.val_acc,
        final_test_acc: final_round.test_acc,
        total_steps: rounds.iter().map(|r| r.steps).sum(),
        rounds,
        traces,
        reinits,
        network,
        data,
        sample,
    })
}
