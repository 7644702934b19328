//! The layerwise round: rescale kept blocks to their initial norms, calibrate
//! a scalar normalization after block `k`, reinitialize everything above it,
//! then fine-tune the whole network.

use super::mask::{apply_reinit, mask_blocks_from, Mask};
use super::schedule::{LwFlags, RoundSpec};
use crate::error::{LabError, Result};
use crate::model::{train, Layer, Network, TrainConfig, TrainData, TrainTrace};
use crate::numerics::{frobenius_norm, RngStream, Tensor};

/// Floor applied to the calibrated standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Stores the Frobenius norm of every trainable tensor. Must be called once,
/// right after initialization.
pub fn record_init_scales(network: &mut Network) -> Result<Vec<f64>> {
    if network.init_scales().is_some() {
        return Err(LabError::Contract("initial scales already recorded".into()));
    }
    let scales = network.segment_norms();
    network.set_init_scales(scales.clone());
    Ok(scales)
}

/// Rescales every trainable tensor of blocks `1..=k` to its recorded norm.
/// Tensors whose recorded or current norm is zero are left alone.
pub fn rescale_blocks(network: &mut Network, k: usize) -> Result<()> {
    let scales = network
        .init_scales()
        .ok_or_else(|| LabError::Contract("rescale before init scales were recorded".into()))?
        .to_vec();
    if k == 0 || k > network.num_blocks() {
        return Err(LabError::Contract(format!("block {k} out of range")));
    }
    for id in network.segments_where(|b| b < k) {
        let target = scales[id];
        let values = network.params_mut().values_mut(id);
        let current = frobenius_norm(values);
        if target > 0.0 && current > 0.0 {
            let factor = target / current;
            values.iter_mut().for_each(|v| *v *= factor);
        }
    }
    Ok(())
}

/// Rescales every trainable tensor of the network.
pub fn rescale_all(network: &mut Network) -> Result<()> {
    let n = network.num_blocks();
    rescale_blocks(network, n)
}

/// Scalar mean and population standard deviation of the eval-mode output of
/// block `k` on `sample`.
pub fn compute_block_stats(network: &Network, k: usize, sample: &Tensor) -> Result<(f64, f64)> {
    let z = network.block_output(sample, k)?;
    Ok(scalar_stats(z.data()))
}

pub fn scalar_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    (mu, if sigma < SIGMA_FLOOR { SIGMA_FLOOR } else { sigma })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LambdaAction {
    Insert,
    Update,
}

/// Inserts a normalization layer after block `k`, or updates the one that
/// is already there.
pub fn insert_or_update_lambda(
    network: &mut Network,
    k: usize,
    mu: f64,
    sigma: f64,
    action: LambdaAction,
) -> Result<()> {
    if k == 0 || k > network.num_blocks() {
        return Err(LabError::Contract(format!("block {k} out of range")));
    }
    if !(sigma > 0.0) {
        return Err(LabError::Contract(format!("lambda sigma {sigma} must be > 0")));
    }
    let block = network.block_mut(k);
    match (action, block.lambda().is_some()) {
        (LambdaAction::Insert, false) => block.layers.push(Layer::LambdaNorm { mu, sigma }),
        (LambdaAction::Update, true) => {
            *block.layers.last_mut().expect("lambda present") = Layer::LambdaNorm { mu, sigma };
        }
        (LambdaAction::Insert, true) => {
            return Err(LabError::Contract(format!("block {k} already has a lambda layer")))
        }
        (LambdaAction::Update, false) => {
            return Err(LabError::Contract(format!("no lambda layer after block {k} to update")))
        }
    }
    Ok(())
}

/// What a round's reinitialization step touched.
#[derive(Clone, Debug, PartialEq)]
pub struct ReinitStep {
    pub mask: Mask,
    pub mu: f64,
    pub sigma: f64,
}

/// Everything a layerwise round does before fine-tuning.
pub fn lw_prepare(
    network: &mut Network,
    round: &RoundSpec,
    flags: &LwFlags,
    sample: &Tensor,
    rng: &RngStream,
) -> Result<ReinitStep> {
    let k = round.kept_block;
    if k == 0 || k > network.k_blocks() {
        return Err(LabError::Config(format!(
            "kept block {k} outside 1..={}",
            network.k_blocks()
        )));
    }
    if flags.do_rescale {
        rescale_blocks(network, k)?;
    }
    let (mu, sigma) = compute_block_stats(network, k, sample)?;
    if flags.do_normalize {
        let action = if round.first_visit() {
            LambdaAction::Insert
        } else {
            LambdaAction::Update
        };
        insert_or_update_lambda(network, k, mu, sigma, action)?;
    }
    // Blocks are 0-based internally: "above block k" starts at index k.
    let mask = mask_blocks_from(network, k);
    let eta = network.draw_init(&rng.named("eta"))?;
    apply_reinit(network.params_mut(), &mask, &eta)?;
    Ok(ReinitStep { mask, mu, sigma })
}

/// One full layerwise round. Kept blocks are trained along with the rest
/// unless `freeze_kept` is set.
pub fn lw_round(
    network: &mut Network,
    round: &RoundSpec,
    flags: &LwFlags,
    sample: &Tensor,
    data: &TrainData,
    config: &TrainConfig,
    rng: &RngStream,
) -> Result<(TrainTrace, ReinitStep)> {
    let step = lw_prepare(network, round, flags, sample, rng)?;
    let k = round.kept_block;
    if flags.freeze_kept {
        let kept = network.segments_where(|b| b < k);
        network.set_frozen(|id| kept.contains(&id));
    }
    let cfg = TrainConfig {
        max_steps: round.steps,
        ..config.clone()
    };
    let trace = train(network, data, &cfg, &rng.named("train"));
    network.unfreeze_all();
    Ok((trace?, step))
}
