use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::reinit::Method;

/// Descriptors of one experimental setting: the features the tree may split
/// on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub dataset: String,
    pub arch: String,
    pub dropout: f64,
    pub augmentation: bool,
    pub initializer: String,
    pub train_size: usize,
    pub n_classes: usize,
    pub penalty: f64,
    pub budget: usize,
}

/// Test accuracy per (setting, method).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeGrid {
    pub settings: Vec<Setting>,
    pub methods: Vec<Method>,
    /// `cells[row][col]`.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl OutcomeGrid {
    pub fn new(methods: Vec<Method>) -> Self {
        OutcomeGrid {
            settings: Vec::new(),
            methods,
            cells: Vec::new(),
        }
    }

    pub fn push(&mut self, setting: Setting, accuracies: Vec<Option<f64>>) -> Result<()> {
        if accuracies.len() != self.methods.len() {
            return Err(LabError::Shape(format!(
                "{} accuracies for {} methods",
                accuracies.len(),
                self.methods.len()
            )));
        }
        if let Some(bad) = accuracies.iter().flatten().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(LabError::Contract(format!("accuracy {bad} outside [0, 1]")));
        }
        self.settings.push(setting);
        self.cells.push(accuracies);
        Ok(())
    }

    pub fn column(&self, method: Method) -> Option<usize> {
        self.methods.iter().position(|&m| m == method)
    }

    pub fn architectures(&self) -> Vec<String> {
        let mut archs: Vec<String> = self.settings.iter().map(|s| s.arch.clone()).collect();
        archs.sort();
        archs.dedup();
        archs
    }

    /// Best method of each fully observed row, ties resolved by the fixed
    /// method order. Rows with a missing cell are skipped; the returned
    /// indices say which rows were used.
    pub fn best_methods(&self) -> (Vec<usize>, Vec<Method>) {
        let mut order: Vec<usize> = (0..self.methods.len()).collect();
        order.sort_by_key(|&c| tie_rank(self.methods[c]));
        let mut rows = Vec::new();
        let mut best = Vec::new();
        for (r, cells) in self.cells.iter().enumerate() {
            if cells.iter().any(Option::is_none) {
                continue;
            }
            let mut winner = order[0];
            for &c in &order[1..] {
                if cells[c] > cells[winner] {
                    winner = c;
                }
            }
            rows.push(r);
            best.push(self.methods[winner]);
        }
        (rows, best)
    }
}

/// Position in the tie-break order `BL < WELSR < DSD < WELS < FC < LW`;
/// anything else sorts last.
pub fn tie_rank(method: Method) -> usize {
    Method::COMPARED.iter().position(|&m| m == method).unwrap_or(Method::COMPARED.len())
}
