//! Meta-analysis over many runs: sign tests with Holm correction and CART
//! trees predicting the best method from setting descriptors.

pub mod grid;
pub mod significance;
pub mod stats;
pub mod tree;

pub use grid::{tie_rank, OutcomeGrid, Setting};
pub use significance::{pairwise_significance, PairResult, SignificanceTable};
pub use stats::{binomial_tail_exact, exact_binomial_test, gini, holm_stepdown};
pub use tree::{
    best_split, fit_tree, leaf_report, render_tree, split_gain, tree_data_from_grid, DecisionTree, FeatureKind,
    FeatureSpec, FeatureValue, LeafSummary, Node, Split, SplitRule, TreeData, TreeParams, GAIN_TIE,
};
