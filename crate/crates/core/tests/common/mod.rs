//! Brute-force oracles shared by the oracle tests and the acceptance run.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use reinit_lab::metalab::*;

/// Counts outcomes of `n` coin flips with at least `wins` heads.
pub fn brute_tail(wins: u32, n: u32) -> BigRational {
    let hits = (0u64..1 << n).filter(|o| o.count_ones() >= wins).count();
    BigRational::new(BigInt::from(hits), BigInt::from(1u64 << n))
}

/// Closed testing with Bonferroni local tests, which Holm's procedure
/// shortcuts: reject `H_i` iff every intersection `S` containing `i` has
/// `min p <= alpha / |S|`. Enumerates all `2^m` intersections.
pub fn closed_testing(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut min = vec![f64::INFINITY; 1 << m];
    let mut reject = vec![true; m];
    for s in 1usize..1 << m {
        let low = s.trailing_zeros() as usize;
        min[s] = min[s & (s - 1)].min(p[low]);
        if min[s] > alpha / s.count_ones() as f64 {
            (0..m).filter(|i| s & (1 << i) != 0).for_each(|i| reject[i] = false);
        }
    }
    reject
}

pub fn random_data(rng: &mut ChaCha8Rng, rows: usize) -> TreeData {
    let features = vec![
        FeatureSpec {
            name: "a".into(),
            kind: FeatureKind::Numeric,
        },
        FeatureSpec {
            name: "b".into(),
            kind: FeatureKind::Categorical,
        },
        FeatureSpec {
            name: "c".into(),
            kind: FeatureKind::Numeric,
        },
    ];
    let cats = ["x", "y", "z", "w"];
    let n_labels = rng.random_range(2..=4);
    let rows_v: Vec<Vec<FeatureValue>> = (0..rows)
        .map(|_| {
            vec![
                FeatureValue::Num(rng.random_range(0..8) as f64 * 0.5),
                FeatureValue::Cat(cats[rng.random_range(0..cats.len())].into()),
                FeatureValue::Num(rng.random::<f64>()),
            ]
        })
        .collect();
    // Labels loosely follow the features so that good splits exist.
    let labels = rows_v
        .iter()
        .map(|r| {
            let base = match (&r[0], &r[1]) {
                (FeatureValue::Num(a), FeatureValue::Cat(b)) => (*a as usize + (b == "y") as usize) % n_labels,
                _ => unreachable!(),
            };
            if rng.random_bool(0.3) {
                rng.random_range(0..n_labels)
            } else {
                base
            }
        })
        .collect();
    TreeData {
        features,
        rows: rows_v,
        labels,
        label_names: (0..n_labels).map(|l| format!("L{l}")).collect(),
    }
}

pub fn gini_of(labels: &[usize], n_labels: usize) -> f64 {
    let n = labels.len() as f64;
    let mut c = vec![0.0; n_labels];
    labels.iter().for_each(|&l| c[l] += 1.0);
    1.0 - c.iter().map(|x| (x / n) * (x / n)).sum::<f64>()
}

/// Every admissible candidate, scored independently of the library.
pub fn exhaustive_best(data: &TreeData, idx: &[usize], min_leaf: usize) -> Option<f64> {
    let k = data.label_names.len();
    let all: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
    let parent = gini_of(&all, k);
    let mut best: Option<f64> = None;
    for (f, spec) in data.features.iter().enumerate() {
        let mut rules = Vec::new();
        match spec.kind {
            FeatureKind::Numeric => {
                let mut vals: Vec<f64> = idx
                    .iter()
                    .map(|&i| match data.rows[i][f] {
                        FeatureValue::Num(x) => x,
                        _ => unreachable!(),
                    })
                    .collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                for w in vals.windows(2) {
                    rules.push(SplitRule::LessEq((w[0] + w[1]) / 2.0));
                }
            }
            FeatureKind::Categorical => {
                let mut vals: Vec<String> = idx
                    .iter()
                    .map(|&i| match &data.rows[i][f] {
                        FeatureValue::Cat(c) => c.clone(),
                        _ => unreachable!(),
                    })
                    .collect();
                vals.sort();
                vals.dedup();
                rules.extend(vals.into_iter().map(SplitRule::Equals));
            }
        }
        for rule in rules {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rule.goes_left(&data.rows[i][f]));
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let ll: Vec<usize> = l.iter().map(|&i| data.labels[i]).collect();
            let rl: Vec<usize> = r.iter().map(|&i| data.labels[i]).collect();
            let n = idx.len() as f64;
            let gain = parent - ll.len() as f64 / n * gini_of(&ll, k) - rl.len() as f64 / n * gini_of(&rl, k);
            if gain > GAIN_TIE && best.is_none_or(|b| gain > b) {
                best = Some(gain);
            }
        }
    }
    best
}
