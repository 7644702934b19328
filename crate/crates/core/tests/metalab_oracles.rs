mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reinit_lab::metalab::*;
use reinit_lab::reinit::Method;

#[test]
fn binomial_tail_matches_enumeration() {
    for n in 1..=20 {
        for w in 0..=n {
            assert_eq!(binomial_tail_exact(w, n).unwrap(), brute_tail(w, n), "w={w} n={n}");
        }
    }
}

#[test]
fn binomial_examples() {
    assert_eq!(exact_binomial_test(10, 10).unwrap(), 1.0 / 1024.0);
    assert_eq!(exact_binomial_test(0, 7).unwrap(), 1.0);
    assert_eq!(exact_binomial_test(5, 6).unwrap(), 7.0 / 64.0);
    assert!(exact_binomial_test(0, 0).is_err());
    assert!(exact_binomial_test(4, 3).is_err());
}

#[test]
fn holm_matches_closed_testing() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..200 {
        let m = 1 + trial % 20;
        // A mix of continuous and repeated small p-values.
        let p: Vec<f64> = (0..m)
            .map(|_| {
                if rng.random_bool(0.3) {
                    [0.001, 0.004, 0.01, 0.2][rng.random_range(0..4)]
                } else {
                    rng.random::<f64>() * 0.1
                }
            })
            .collect();
        assert_eq!(holm_stepdown(&p, 0.05), closed_testing(&p, 0.05), "{p:?}");
    }
}

#[test]
fn holm_examples() {
    assert_eq!(holm_stepdown(&[0.01, 0.04, 0.03], 0.05), vec![true, false, false]);
    assert_eq!(holm_stepdown(&[0.01, 0.02, 0.03], 0.1), vec![true, true, true]);
    assert!(holm_stepdown(&[], 0.05).is_empty());
}

proptest! {
    #[test]
    fn tail_decreases_with_wins(n in 1u32..60, w in 0u32..60) {
        prop_assume!(w < n);
        prop_assert!(binomial_tail_exact(w + 1, n).unwrap() < binomial_tail_exact(w, n).unwrap());
    }

    #[test]
    fn tail_increases_with_trials(n in 1u32..60, w in 1u32..60) {
        prop_assume!(w <= n);
        prop_assert!(binomial_tail_exact(w, n + 1).unwrap() > binomial_tail_exact(w, n).unwrap());
    }

    #[test]
    fn holm_rejections_are_a_prefix_and_within_bonferroni(p in prop::collection::vec(0.0f64..0.2, 0..15)) {
        let reject = holm_stepdown(&p, 0.05);
        let m = p.len() as f64;
        for (i, &r) in reject.iter().enumerate() {
            if p[i] <= 0.05 / m {
                prop_assert!(r);
            }
            if r {
                prop_assert!(p[i] <= 0.05);
                // Anything with a smaller p-value is rejected too.
                for j in 0..p.len() {
                    if p[j] < p[i] {
                        prop_assert!(reject[j]);
                    }
                }
            }
        }
    }
}

#[test]
fn best_split_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..300 {
        let rows = rng.random_range(2..=200);
        let data = random_data(&mut rng, rows);
        let min_leaf = [1, 3, 7][trial % 3];
        let idx: Vec<usize> = (0..rows).collect();
        let got = best_split(&data, &idx, min_leaf);
        let want = exhaustive_best(&data, &idx, min_leaf);
        match (&got, want) {
            (None, None) => {}
            (Some(s), Some(g)) => {
                assert!((s.gain - g).abs() <= 1e-9, "trial {trial}: {} vs {g}", s.gain);
                // The reported gain is the gain of the reported partition.
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| s.rule.goes_left(&data.rows[i][s.feature]));
                assert!(l.len() >= min_leaf && r.len() >= min_leaf);
                let recomputed = split_gain(&data.counts(&idx), &data.counts(&l));
                assert!((recomputed - s.gain).abs() <= 1e-12);
            }
            _ => panic!("trial {trial}: library {got:?}, oracle {want:?}"),
        }
    }
}

fn check_node(node: &Node, data: &TreeData, idx: &[usize], params: &TreeParams) {
    assert_eq!(node.samples, idx.len());
    assert_eq!(node.counts, data.counts(idx));
    assert!(node.depth <= params.max_depth);
    match (&node.split, &node.children) {
        (Some(split), Some(children)) => {
            assert!(node.gini > 0.0, "pure nodes are never split");
            let (l, r): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| split.rule.goes_left(&data.rows[i][split.feature]));
            assert!(l.len() >= params.min_leaf && r.len() >= params.min_leaf);
            assert_eq!(children.0.depth, node.depth + 1);
            check_node(&children.0, data, &l, params);
            check_node(&children.1, data, &r, params);
        }
        (None, None) => {}
        _ => panic!("split and children disagree"),
    }
}

#[test]
fn fitted_trees_are_structurally_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let rows = rng.random_range(10..=200);
        let data = random_data(&mut rng, rows);
        let params = TreeParams::default();
        let tree = fit_tree(&data, &params).unwrap();
        let idx: Vec<usize> = (0..rows).collect();
        check_node(&tree.root, &data, &idx, &params);
        assert!(tree.root.depth_max() <= params.max_depth);
        let leaves = leaf_report(&tree);
        assert_eq!(leaves.iter().map(|l| l.samples).sum::<usize>(), rows);
        assert!(!render_tree(&tree).is_empty());
    }
}

fn leaf_tree(counts: Vec<usize>) -> DecisionTree {
    let n: usize = counts.iter().sum();
    DecisionTree {
        features: Vec::new(),
        label_names: ["LW", "DSD", "FC"].map(String::from).to_vec(),
        params: TreeParams::default(),
        root: Node {
            depth: 0,
            samples: n,
            gini: gini(&counts).unwrap(),
            counts,
            split: None,
            children: None,
        },
    }
}

#[test]
fn noisy_leaf_lists_the_top_set() {
    let report = leaf_report(&leaf_tree(vec![3, 3, 1]));
    assert_eq!(report[0].methods, vec!["LW", "DSD"]);
    assert!((report[0].gini - 30.0 / 49.0).abs() < 1e-12);
}

#[test]
fn pure_enough_leaf_reports_the_majority() {
    let report = leaf_report(&leaf_tree(vec![5, 0, 1]));
    assert_eq!(report[0].methods, vec!["LW"]);
}

fn setting(i: usize) -> Setting {
    Setting {
        dataset: format!("d{i}"),
        arch: "A".into(),
        dropout: 0.0,
        augmentation: false,
        initializer: "he_normal".into(),
        train_size: 256,
        n_classes: 8,
        penalty: 0.0,
        budget: 100,
    }
}

#[test]
fn significance_on_a_dominated_pair() {
    let mut grid = OutcomeGrid::new(vec![Method::Baseline, Method::Fc, Method::Lw]);
    for i in 0..10 {
        let bl = 0.5 + i as f64 * 0.01;
        // FC ties BL on half the settings.
        let fc = if i % 2 == 0 { bl } else { bl + 0.02 };
        grid.push(setting(i), vec![Some(bl), Some(fc), Some(bl + 0.1)]).unwrap();
    }
    let table = pairwise_significance(&grid, 0.05).unwrap();
    assert_eq!(table.pairs.len(), 6);
    let lw = table.get("A", Method::Baseline, Method::Lw).unwrap();
    assert_eq!((lw.wins, lw.losses, lw.ties), (10, 0, 0));
    assert_eq!(lw.p_value, Some(1.0 / 1024.0));
    assert!(lw.star && lw.circle);
    let fc = table.get("A", Method::Baseline, Method::Fc).unwrap();
    assert_eq!((fc.wins, fc.ties), (5, 5));
    assert_eq!(fc.p_value, Some(1.0 / 32.0));
    assert!(fc.star && !fc.circle);
    let back = table.get("A", Method::Lw, Method::Baseline).unwrap();
    assert_eq!(back.p_value, Some(1.0));
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.lines().next().unwrap().starts_with("pair,wins,trials,p"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn all_ties_leave_the_test_undefined() {
    let mut grid = OutcomeGrid::new(vec![Method::Baseline, Method::Lw]);
    for i in 0..4 {
        grid.push(setting(i), vec![Some(0.5), Some(0.5)]).unwrap();
    }
    let table = pairwise_significance(&grid, 0.05).unwrap();
    assert!(table.pairs.iter().all(|p| p.p_value.is_none() && !p.star && !p.circle));
}

#[test]
fn best_methods_break_ties_in_fixed_order() {
    let mut grid = OutcomeGrid::new(vec![Method::Lw, Method::Baseline, Method::Fc]);
    grid.push(setting(0), vec![Some(0.7), Some(0.7), Some(0.6)]).unwrap();
    grid.push(setting(1), vec![Some(0.7), None, Some(0.9)]).unwrap();
    grid.push(setting(2), vec![Some(0.7), Some(0.6), Some(0.9)]).unwrap();
    assert_eq!(grid.best_methods(), (vec![0, 2], vec![Method::Baseline, Method::Fc]));
    let data = tree_data_from_grid(&grid);
    assert_eq!(data.rows.len(), 2);
    data.validate().unwrap();
}
