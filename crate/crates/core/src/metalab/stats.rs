use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{LabError, Result};

fn binomial_coefficients(n: u32) -> Vec<BigUint> {
    let mut row = vec![BigUint::one()];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(BigUint::one());
        for w in row.windows(2) {
            next.push(&w[0] + &w[1]);
        }
        next.push(BigUint::one());
        row = next;
    }
    row
}

/// `sum_{k >= wins} C(trials, k) / 2^trials` as an exact fraction.
pub fn binomial_tail_exact(wins: u32, trials: u32) -> Result<BigRational> {
    if trials == 0 {
        return Err(LabError::UndefinedTest("sign test over zero non-tied trials".into()));
    }
    if wins > trials {
        return Err(LabError::Contract(format!("{wins} wins out of {trials} trials")));
    }
    let coeffs = binomial_coefficients(trials);
    let tail: BigUint = coeffs[wins as usize..].iter().fold(BigUint::zero(), |acc, c| acc + c);
    let denom = BigUint::one() << trials as usize;
    Ok(BigRational::new(BigInt::from(tail), BigInt::from(denom)))
}

/// One-sided exact binomial (sign) test of `wins` successes in `trials`
/// fair coin flips.
pub fn exact_binomial_test(wins: u32, trials: u32) -> Result<f64> {
    let p = binomial_tail_exact(wins, trials)?;
    Ok(p.to_f64().expect("tail probability is in [0, 1]"))
}

/// Holm's step-down procedure. Flags come back in input order.
pub fn holm_stepdown(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut reject = vec![false; m];
    for (i, &idx) in order.iter().enumerate() {
        if p_values[idx] <= alpha / (m - i) as f64 {
            reject[idx] = true;
        } else {
            break;
        }
    }
    reject
}

/// `1 - sum (n_c / n)^2`.
pub fn gini(counts: &[usize]) -> Result<f64> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(LabError::UndefinedTest("Gini impurity of an empty node".into()));
    }
    Ok(gini_unchecked(counts, n))
}

pub(crate) fn gini_unchecked(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}
