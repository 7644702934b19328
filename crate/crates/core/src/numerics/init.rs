use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use super::tensor::Tensor;
use crate::error::{LabError, Result};

/// Weight initializer family used for fresh parameters and for every
/// reinitialization draw.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    #[default]
    HeNormal,
    XavierUniform,
}

impl Initializer {
    pub fn sample(
        self,
        fan_in: usize,
        fan_out: usize,
        shape: &[usize],
        rng: &RngStream,
    ) -> Result<Tensor> {
        match self {
            Initializer::HeNormal => he_normal_init(fan_in, shape, rng),
            Initializer::XavierUniform => xavier_uniform_init(fan_in, fan_out, shape, rng),
        }
    }

    /// Same as [`Initializer::sample`] but writes into an existing buffer.
    pub fn fill(self, fan_in: usize, fan_out: usize, out: &mut [f64], rng: &RngStream) -> Result<()> {
        let mut g = rng.generator();
        match self {
            Initializer::HeNormal => {
                let std = he_std(fan_in)?;
                for v in out.iter_mut() {
                    let z: f64 = g.sample(StandardNormal);
                    *v = std * z;
                }
            }
            Initializer::XavierUniform => {
                let limit = xavier_limit(fan_in, fan_out)?;
                for v in out.iter_mut() {
                    *v = g.random_range(-limit..=limit);
                }
            }
        }
        Ok(())
    }

    pub fn name(self) -> &'static str {
        match self {
            Initializer::HeNormal => "he_normal",
            Initializer::XavierUniform => "xavier_uniform",
        }
    }
}

fn he_std(fan_in: usize) -> Result<f64> {
    if fan_in == 0 {
        return Err(LabError::InvalidArchitecture("fan_in must be >= 1".into()));
    }
    Ok((2.0 / fan_in as f64).sqrt())
}

fn xavier_limit(fan_in: usize, fan_out: usize) -> Result<f64> {
    if fan_in == 0 || fan_out == 0 {
        return Err(LabError::InvalidArchitecture(
            "fan_in and fan_out must be >= 1".into(),
        ));
    }
    Ok((6.0 / (fan_in + fan_out) as f64).sqrt())
}

/// Entries i.i.d. `N(0, 2 / fan_in)`.
pub fn he_normal_init(fan_in: usize, shape: &[usize], rng: &RngStream) -> Result<Tensor> {
    let mut t = Tensor::zeros(shape);
    Initializer::HeNormal.fill(fan_in, 1, t.data_mut(), rng)?;
    Ok(t)
}

/// Entries i.i.d. `U(-L, L)` with `L = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform_init(
    fan_in: usize,
    fan_out: usize,
    shape: &[usize],
    rng: &RngStream,
) -> Result<Tensor> {
    let mut t = Tensor::zeros(shape);
    Initializer::XavierUniform.fill(fan_in, fan_out, t.data_mut(), rng)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn he_unit_scale_when_fan_in_two() {
        // sqrt(2/2) = 1: a single draw is a standard normal sample.
        let s = RngStream::new(42, 0);
        let t = he_normal_init(2, &[1], &s).unwrap();
        let mut g = s.generator();
        let z: f64 = g.sample(StandardNormal);
        assert_eq!(t.data()[0], z);
    }

    #[test]
    fn he_empirical_std() {
        let t = he_normal_init(8, &[100_000], &RngStream::new(1, 5)).unwrap();
        let (_, var) = moments(t.data());
        assert!((var.sqrt() - 0.5).abs() / 0.5 < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn he_is_deterministic() {
        let s = RngStream::new(9, 9);
        let a = he_normal_init(16, &[4, 4], &s).unwrap();
        let b = he_normal_init(16, &[4, 4], &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_fan_rejected() {
        let s = RngStream::root(0);
        assert!(matches!(
            he_normal_init(0, &[1], &s),
            Err(LabError::InvalidArchitecture(_))
        ));
        assert!(xavier_uniform_init(0, 3, &[1], &s).is_err());
        assert!(xavier_uniform_init(3, 0, &[1], &s).is_err());
    }

    #[test]
    fn xavier_limits() {
        let s = RngStream::new(3, 1);
        let t = xavier_uniform_init(3, 3, &[1000], &s).unwrap();
        assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let t = xavier_uniform_init(1, 5, &[1000], &s).unwrap();
        assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(t.data().iter().any(|v| v.abs() > 0.9));
    }

    #[test]
    fn xavier_variance() {
        // L = sqrt(6/24) = 0.5, Var = L^2 / 3.
        let t = xavier_uniform_init(12, 12, &[100_000], &RngStream::new(11, 2)).unwrap();
        let (_, var) = moments(t.data());
        let want = 0.25 / 3.0;
        assert!((var - want).abs() / want < 0.03, "var {var}");
    }
}
