use rand::seq::SliceRandom;

use crate::error::{LabError, Result};
use crate::numerics::{RngStream, Tensor};

/// Labelled examples; row `i` of `x` carries label `y[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(x: Tensor, y: Vec<usize>, n_classes: usize) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(LabError::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
            return Err(LabError::Config(format!("label {bad} >= {n_classes} classes")));
        }
        Ok(Dataset { x, y, n_classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Splits off `round(fraction * n)` shuffled examples as validation data.
    pub fn split_validation(&self, fraction: f64, rng: &RngStream) -> Result<(Dataset, Option<Dataset>)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(LabError::Config(format!("val_fraction {fraction} outside [0, 1)")));
        }
        let n_val = (fraction * self.len() as f64).round() as usize;
        if n_val == 0 {
            return Ok((self.clone(), None));
        }
        if n_val >= self.len() {
            return Err(LabError::Config("validation split leaves no training data".into()));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng.generator());
        let (val, train) = idx.split_at(n_val);
        let mut train = train.to_vec();
        let mut val = val.to_vec();
        train.sort_unstable();
        val.sort_unstable();
        Ok((self.subset(&train), Some(self.subset(&val))))
    }

    /// First `min(n, len)` examples after a seeded shuffle.
    pub fn sample(&self, n: usize, rng: &RngStream) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng.generator());
        idx.truncate(n.min(self.len()));
        idx.sort_unstable();
        self.subset(&idx)
    }
}

/// The fixed train/validation split of one run.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Dataset,
    pub val: Option<Dataset>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let x = Tensor::from_vec(&[n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::new(x, (0..n).map(|i| i % 2).collect(), 2).unwrap()
    }

    #[test]
    fn split_is_a_partition() {
        let d = toy(50);
        let (tr, va) = d.split_validation(0.1, &RngStream::root(3)).unwrap();
        let va = va.unwrap();
        assert_eq!((tr.len(), va.len()), (45, 5));
        let mut all: Vec<f64> = tr.x.data().iter().chain(va.x.data()).cloned().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, (0..50).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn zero_fraction_keeps_everything() {
        let d = toy(10);
        let (tr, va) = d.split_validation(0.0, &RngStream::root(3)).unwrap();
        assert!(va.is_none());
        assert_eq!(tr, d);
    }

    #[test]
    fn bad_labels_rejected() {
        let x = Tensor::zeros(&[2, 1]);
        assert!(Dataset::new(x, vec![0, 5], 2).is_err());
    }
}
