//! Central finite-difference verification of analytic gradients.

use rand::seq::index;

use super::rng::RngStream;
use crate::error::{LabError, Result};

/// A scalar objective over a flat parameter vector with an analytic gradient.
/// `loss` must be a deterministic function of the parameters.
pub trait Objective {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn loss(&mut self) -> Result<f64>;
    fn loss_and_grad(&mut self) -> Result<(f64, Vec<f64>)>;
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probed: usize,
    /// Index of the parameter attaining the maximum.
    pub worst_index: usize,
}

/// Probes `min(n_probe, d)` parameters chosen without replacement and returns
/// the largest `|g - fd| / (|g| + |fd| + 1e-12)`.
pub fn finite_diff_gradcheck<O: Objective + ?Sized>(
    objective: &mut O,
    epsilon: f64,
    n_probe: usize,
    rng: &RngStream,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(LabError::Config(format!(
            "gradcheck epsilon {epsilon} outside (0, 1e-2]"
        )));
    }
    let (loss, grad) = objective.loss_and_grad()?;
    if !loss.is_finite() {
        return Err(LabError::NumericFailure(format!("loss is {loss}")));
    }
    let d = objective.params().len();
    let picks: Vec<usize> = if n_probe >= d {
        (0..d).collect()
    } else {
        let mut g = rng.generator();
        let mut v = index::sample(&mut g, d, n_probe).into_vec();
        v.sort_unstable();
        v
    };
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        probed: picks.len(),
        worst_index: 0,
    };
    for &i in &picks {
        let orig = objective.params()[i];
        objective.params_mut()[i] = orig + epsilon;
        let up = objective.loss()?;
        objective.params_mut()[i] = orig - epsilon;
        let down = objective.loss()?;
        objective.params_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(LabError::NumericFailure(format!(
                "non-finite perturbed loss at parameter {i}"
            )));
        }
        let fd = (up - down) / (2.0 * epsilon);
        let err = (grad[i] - fd).abs() / (grad[i].abs() + fd.abs() + 1e-12);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 0.5 * ||A w - b||^2 with a fixed A, b.
    struct LeastSquares {
        w: Vec<f64>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        wrong_grad: bool,
    }

    impl LeastSquares {
        fn residual(&self) -> Vec<f64> {
            self.a
                .iter()
                .zip(&self.b)
                .map(|(row, bi)| row.iter().zip(&self.w).map(|(x, w)| x * w).sum::<f64>() - bi)
                .collect()
        }
    }

    impl Objective for LeastSquares {
        fn params(&self) -> &[f64] {
            &self.w
        }
        fn params_mut(&mut self) -> &mut [f64] {
            &mut self.w
        }
        fn loss(&mut self) -> Result<f64> {
            Ok(0.5 * self.residual().iter().map(|r| r * r).sum::<f64>())
        }
        fn loss_and_grad(&mut self) -> Result<(f64, Vec<f64>)> {
            let r = self.residual();
            let mut g = vec![0.0; self.w.len()];
            for (row, ri) in self.a.iter().zip(&r) {
                for (gj, aij) in g.iter_mut().zip(row) {
                    *gj += aij * ri;
                }
            }
            if self.wrong_grad {
                g[0] *= 1.5;
            }
            Ok((0.5 * r.iter().map(|x| x * x).sum::<f64>(), g))
        }
    }

    fn problem(wrong: bool) -> LeastSquares {
        LeastSquares {
            w: vec![0.3, -1.2, 0.8],
            a: vec![vec![1.0, 2.0, 0.5], vec![-0.3, 0.1, 1.1], vec![0.7, 0.7, -0.2]],
            b: vec![0.1, 0.2, -0.4],
            wrong_grad: wrong,
        }
    }

    #[test]
    fn exact_gradient_passes() {
        let r = finite_diff_gradcheck(&mut problem(false), 1e-4, 200, &RngStream::root(1)).unwrap();
        assert!(r.max_relative_error < 1e-8, "{r:?}");
        assert_eq!(r.probed, 3);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let r = finite_diff_gradcheck(&mut problem(true), 1e-4, 200, &RngStream::root(1)).unwrap();
        assert!(r.max_relative_error > 0.1);
        assert_eq!(r.worst_index, 0);
    }

    #[test]
    fn epsilon_range_checked() {
        assert!(finite_diff_gradcheck(&mut problem(false), 0.0, 10, &RngStream::root(1)).is_err());
        assert!(finite_diff_gradcheck(&mut problem(false), 0.1, 10, &RngStream::root(1)).is_err());
    }
}
