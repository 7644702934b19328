use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::{Dataset, Network};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessDraw {
    pub delta_acc: f64,
    pub delta_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessPoint {
    pub sigma_noise: f64,
    pub mean_delta_acc: f64,
    pub stderr_acc: f64,
    pub mean_delta_loss: f64,
    pub stderr_loss: f64,
    pub draws: Vec<FlatnessDraw>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessCurve {
    /// Sorted by `sigma_noise`.
    pub points: Vec<FlatnessPoint>,
    pub n_draws: usize,
}

impl FlatnessCurve {
    pub fn at(&self, sigma_noise: f64) -> Option<&FlatnessPoint> {
        self.points.iter().find(|p| p.sigma_noise == sigma_noise)
    }
}

fn mean_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Signed change in training accuracy and loss under `w + xi`,
/// `xi ~ N(0, sigma^2 I)` over every trainable parameter. The parameters are
/// restored bitwise after each draw.
pub fn flatness_curve(
    network: &mut Network,
    data: &Dataset,
    sigmas: &[f64],
    n_draws: usize,
    rng: &RngStream,
) -> Result<FlatnessCurve> {
    if n_draws == 0 {
        return Err(LabError::Config("flatness probe needs n_draws >= 1".into()));
    }
    if !sigmas.contains(&0.0) {
        return Err(LabError::Config("flatness sigmas must include 0".into()));
    }
    if let Some(bad) = sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(LabError::Config(format!("noise scale {bad} must be >= 0")));
    }
    let mut sorted = sigmas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let saved = network.params().flat().to_vec();
    let base_acc = network.accuracy(&data.x, &data.y)?;
    let base_loss = network.eval_loss(&data.x, &data.y)?;
    let mut points = Vec::with_capacity(sorted.len());
    for (si, &sigma) in sorted.iter().enumerate() {
        let mut draws = Vec::with_capacity(n_draws);
        for draw in 0..n_draws {
            if sigma == 0.0 {
                draws.push(FlatnessDraw {
                    delta_acc: 0.0,
                    delta_loss: 0.0,
                });
                continue;
            }
            let mut g = rng.derive(si as u64).derive(draw as u64).generator();
            for w in network.params_mut().flat_mut() {
                *w += sigma * g.sample::<f64, _>(StandardNormal);
            }
            let acc = network.accuracy(&data.x, &data.y);
            let loss = network.eval_loss(&data.x, &data.y);
            network.params_mut().flat_mut().copy_from_slice(&saved);
            draws.push(FlatnessDraw {
                delta_acc: acc? - base_acc,
                delta_loss: loss? - base_loss,
            });
        }
        let (mean_delta_acc, stderr_acc) = mean_stderr(draws.iter().map(|d| d.delta_acc));
        let (mean_delta_loss, stderr_loss) = mean_stderr(draws.iter().map(|d| d.delta_loss));
        points.push(FlatnessPoint {
            sigma_noise: sigma,
            mean_delta_acc,
            stderr_acc,
            mean_delta_loss,
            stderr_loss,
            draws,
        });
    }
    Ok(FlatnessCurve { points, n_draws })
}
