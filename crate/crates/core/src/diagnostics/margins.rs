use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Dataset, Network};
use crate::numerics::Tensor;

pub const DEFAULT_SMALLEST: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    /// Ascending.
    pub margins: Vec<f64>,
    pub smallest_m: usize,
}

impl MarginReport {
    pub fn smallest(&self) -> &[f64] {
        &self.margins[..self.smallest_m.min(self.margins.len())]
    }

    /// Mean of the `m` smallest margins.
    pub fn mean_smallest(&self, m: usize) -> f64 {
        let head = &self.margins[..m.min(self.margins.len())];
        head.iter().sum::<f64>() / head.len().max(1) as f64
    }

    /// Fraction of strictly positive margins. A tie between the true class
    /// and another class counts as an error here.
    pub fn fraction_correct(&self) -> f64 {
        self.margins.iter().filter(|&&g| g > 0.0).count() as f64 / self.margins.len().max(1) as f64
    }
}

/// `p_true - max_{j != true} p_j` for every row of `probs`.
pub fn margins_of(probs: &Tensor, labels: &[usize]) -> Vec<f64> {
    let c = probs.row_len();
    (0..labels.len())
        .map(|i| {
            let row = probs.row(i);
            let y = labels[i];
            let rival = (0..c).filter(|&j| j != y).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
            row[y] - rival
        })
        .collect()
}

/// Eval-mode softmax margins over `data`, sorted ascending.
pub fn softmax_margins(network: &Network, data: &Dataset) -> Result<MarginReport> {
    let probs = network.predict(&data.x)?;
    let mut margins = margins_of(&probs, &data.y);
    margins.sort_by(f64::total_cmp);
    Ok(MarginReport {
        margins,
        smallest_m: DEFAULT_SMALLEST,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_examples() {
        let p = Tensor::from_vec(&[3, 3], vec![0.7, 0.2, 0.1, 1. / 3., 1. / 3., 1. / 3., 0.1, 0.6, 0.3]).unwrap();
        let g = margins_of(&p, &[0, 1, 0]);
        assert!((g[0] - 0.5).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
        assert!(g[2] < 0.0);
    }

    #[test]
    fn smallest_clamps_to_length() {
        let r = MarginReport {
            margins: vec![-0.5, 0.1, 0.2],
            smallest_m: 400,
        };
        assert_eq!(r.smallest().len(), 3);
        assert!((r.mean_smallest(2) + 0.2).abs() < 1e-12);
        assert!((r.fraction_correct() - 2.0 / 3.0).abs() < 1e-12);
    }
}
