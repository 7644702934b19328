//! Layers, block-structured networks, loss, SGD and the training loop.

pub mod data;
pub mod layer;
pub mod network;
pub mod optim;
pub mod params;
pub mod train;

pub use data::{Dataset, TrainData};
pub use layer::{Conv2D, Dense, Layer, Mode};
pub use network::{accuracy_of, softmax_rows, ArchSpec, Block, LayerSpec, Network, NetworkObjective};
pub use optim::{sgd_step, BatchSize, PlateauSchedule, TrainConfig};
pub use params::{ParamRole, ParameterStore, Segment};
pub use train::{train, EpochStat, TrainTrace};

use crate::error::Result;
use crate::numerics::{finite_diff_gradcheck, GradCheckReport, RngStream, Tensor};

/// Gradient check of [`Network::loss_and_grads`] on one batch, probing up to
/// 256 parameters. Train mode uses a fixed dropout stream.
pub fn gradcheck_network(
    network: &mut Network,
    x: &Tensor,
    labels: &[usize],
    weight_decay: f64,
    mode: Mode,
    epsilon: f64,
    rng: &RngStream,
) -> Result<GradCheckReport> {
    let mut objective = NetworkObjective {
        network,
        x,
        labels,
        weight_decay,
        mode,
        dropout_stream: rng.named("dropout"),
    };
    finite_diff_gradcheck(&mut objective, epsilon, 256, &rng.named("probe"))
}
