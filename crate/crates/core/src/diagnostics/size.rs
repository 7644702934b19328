use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Network, ParamRole};
use crate::numerics::{frobenius_norm, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSizeReport {
    /// Product of squared Frobenius norms of all weight tensors (biases
    /// excluded).
    pub frob_product: f64,
    /// `||activations into the head||_F * ||head weight||_F` on the sample.
    pub head_measure: f64,
    /// `head_measure` relative to a baseline model, once one is supplied.
    pub ratio_vs_baseline: Option<f64>,
}

impl WeightSizeReport {
    pub fn with_baseline(mut self, baseline: &WeightSizeReport) -> Self {
        self.ratio_vs_baseline = Some(self.head_measure / baseline.head_measure);
        self
    }
}

pub fn frob_product(network: &Network) -> f64 {
    let params = network.params();
    params
        .segments()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.role == ParamRole::Weight)
        .map(|(id, _)| frobenius_norm(params.values(id)).powi(2))
        .product()
}

/// Both weight-size measures; `sample` is normally 256 training inputs.
pub fn weight_size(network: &Network, sample: &Tensor) -> Result<WeightSizeReport> {
    let acts = network.head_input(sample)?;
    let head = frobenius_norm(network.params().values(network.head_weight()));
    Ok(WeightSizeReport {
        frob_product: frob_product(network),
        head_measure: acts.frobenius_norm() * head,
        ratio_vs_baseline: None,
    })
}
