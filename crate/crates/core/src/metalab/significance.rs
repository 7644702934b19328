use std::io::Write;

use serde::{Deserialize, Serialize};

use super::grid::OutcomeGrid;
use super::stats::{exact_binomial_test, holm_stepdown};
use crate::error::Result;
use crate::reinit::Method;

/// Evidence that `col` beats `row` within one architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub arch: String,
    pub row: Method,
    pub col: Method,
    /// Settings where `col` is strictly more accurate.
    pub wins: u32,
    pub losses: u32,
    pub ties: u32,
    /// `None` when every shared setting is a tie.
    pub p_value: Option<f64>,
    /// Significant at the raw level.
    pub star: bool,
    /// Survives Holm's correction over the architecture's pairs.
    pub circle: bool,
}

impl PairResult {
    pub fn trials(&self) -> u32 {
        self.wins + self.losses
    }

    pub fn label(&self) -> String {
        format!("{}:{}<{}", self.arch, self.row, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceTable {
    pub alpha: f64,
    pub pairs: Vec<PairResult>,
}

impl SignificanceTable {
    pub fn get(&self, arch: &str, row: Method, col: Method) -> Option<&PairResult> {
        self.pairs.iter().find(|p| p.arch == arch && p.row == row && p.col == col)
    }

    /// `pair,wins,trials,p,star,circle`; undefined p-values are written as `NA`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pair", "wins", "trials", "p", "star", "circle"])?;
        for p in &self.pairs {
            w.write_record([
                p.label(),
                p.wins.to_string(),
                p.trials().to_string(),
                p.p_value.map_or_else(|| "NA".to_string(), |v| v.to_string()),
                p.star.to_string(),
                p.circle.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sign tests for every ordered method pair, per architecture.
pub fn pairwise_significance(grid: &OutcomeGrid, alpha: f64) -> Result<SignificanceTable> {
    let mut pairs = Vec::new();
    for arch in grid.architectures() {
        let rows: Vec<usize> = (0..grid.settings.len()).filter(|&r| grid.settings[r].arch == arch).collect();
        let first = pairs.len();
        for (i, &row) in grid.methods.iter().enumerate() {
            for (j, &col) in grid.methods.iter().enumerate() {
                if i == j {
                    continue;
                }
                let (mut wins, mut losses, mut ties) = (0, 0, 0);
                for &r in &rows {
                    if let (Some(a), Some(b)) = (grid.cells[r][i], grid.cells[r][j]) {
                        match b.partial_cmp(&a) {
                            Some(std::cmp::Ordering::Greater) => wins += 1,
                            Some(std::cmp::Ordering::Less) => losses += 1,
                            _ => ties += 1,
                        }
                    }
                }
                let p_value = if wins + losses > 0 {
                    Some(exact_binomial_test(wins, wins + losses)?)
                } else {
                    None
                };
                pairs.push(PairResult {
                    arch: arch.clone(),
                    row,
                    col,
                    wins,
                    losses,
                    ties,
                    p_value,
                    star: p_value.is_some_and(|p| p <= alpha),
                    circle: false,
                });
            }
        }
        let family: Vec<usize> = (first..pairs.len()).filter(|&k| pairs[k].p_value.is_some()).collect();
        let ps: Vec<f64> = family.iter().map(|&k| pairs[k].p_value.unwrap()).collect();
        for (&k, reject) in family.iter().zip(holm_stepdown(&ps, alpha)) {
            pairs[k].circle = reject;
        }
    }
    Ok(SignificanceTable { alpha, pairs })
}
