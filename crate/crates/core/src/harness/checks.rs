//! Gradient checks of the architecture presets.

use super::arch::{ArchName, ArchPreset};
use crate::error::Result;
use crate::model::{gradcheck_network, Mode, Network};
use crate::numerics::{GradCheckReport, RngStream, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

pub const GRADCHECK_EPSILON: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Central-difference check of a freshly initialized preset on a random
/// batch of 8, in eval mode and (with dropout) in train mode.
pub fn gradcheck_arch(name: ArchName, seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let preset = ArchPreset {
        dropout: match name {
            ArchName::MlpSynth => 0.0,
            ArchName::ScnnMini => 0.25,
        },
        ..ArchPreset::new(name)
    };
    let spec = preset.spec();
    let root = RngStream::root(seed);
    let mut network = Network::build(&spec, &root.named("init"))?;
    let mut shape = vec![8];
    shape.extend_from_slice(network.input_shape());
    let n: usize = shape.iter().product();
    let mut g = root.named("batch").generator();
    let x = Tensor::from_vec(&shape, (0..n).map(|_| g.sample::<f64, _>(StandardNormal)).collect())?;
    let labels: Vec<usize> = (0..8).map(|i| i % network.n_classes()).collect();
    let mut reports = Vec::new();
    for mode in [Mode::Eval, Mode::Train] {
        if mode == Mode::Train && preset.dropout == 0.0 {
            continue;
        }
        let r = gradcheck_network(&mut network, &x, &labels, 1e-3, mode, GRADCHECK_EPSILON, &root.named("check"))?;
        reports.push((format!("{mode:?}").to_lowercase(), r));
    }
    Ok(reports)
}
