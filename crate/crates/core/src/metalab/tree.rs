//! Greedy CART with Gini impurity, numeric midpoint thresholds and
//! one-vs-rest categorical splits.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::grid::{tie_rank, OutcomeGrid};
use super::stats::gini_unchecked;
use crate::error::{LabError, Result};
use crate::reinit::Method;

/// Gains within this distance count as equal; the earlier candidate wins.
pub const GAIN_TIE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Num(f64),
    Cat(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeData {
    pub features: Vec<FeatureSpec>,
    pub rows: Vec<Vec<FeatureValue>>,
    /// Indices into `label_names`.
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
}

impl TreeData {
    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.labels.len() {
            return Err(LabError::Shape(format!("{} rows, {} labels", self.rows.len(), self.labels.len())));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.label_names.len()) {
            return Err(LabError::Contract(format!("label {bad} has no name")));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.features.len() {
                return Err(LabError::Schema(format!("row {r} has {} features", row.len())));
            }
            for (f, v) in self.features.iter().zip(row) {
                let ok = matches!(
                    (f.kind, v),
                    (FeatureKind::Numeric, FeatureValue::Num(x)) if x.is_finite()
                ) || matches!((f.kind, v), (FeatureKind::Categorical, FeatureValue::Cat(_)));
                if !ok {
                    return Err(LabError::Schema(format!("row {r}: bad value {v:?} for feature {}", f.name)));
                }
            }
        }
        Ok(())
    }

    fn num(&self, row: usize, feature: usize) -> f64 {
        match &self.rows[row][feature] {
            FeatureValue::Num(x) => *x,
            FeatureValue::Cat(_) => unreachable!("validated"),
        }
    }

    fn cat(&self, row: usize, feature: usize) -> &str {
        match &self.rows[row][feature] {
            FeatureValue::Cat(c) => c,
            FeatureValue::Num(_) => unreachable!("validated"),
        }
    }

    pub fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.label_names.len()];
        idx.iter().for_each(|&i| c[self.labels[i]] += 1);
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// Left child: value `<=` threshold.
    LessEq(f64),
    /// Left child: value equal to the category.
    Equals(String),
}

impl SplitRule {
    pub fn goes_left(&self, value: &FeatureValue) -> bool {
        match (self, value) {
            (SplitRule::LessEq(t), FeatureValue::Num(x)) => x <= t,
            (SplitRule::Equals(c), FeatureValue::Cat(v)) => c == v,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub rule: SplitRule,
    /// Decrease in weighted Gini impurity.
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub depth: usize,
    pub samples: usize,
    pub counts: Vec<usize>,
    pub gini: f64,
    pub split: Option<Split>,
    pub children: Option<Box<(Node, Node)>>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Leaves in left-to-right order, each with its path of conditions.
    pub fn leaves<'a>(&'a self, features: &[FeatureSpec], path: Vec<String>, out: &mut Vec<(Vec<String>, &'a Node)>) {
        match (&self.split, &self.children) {
            (Some(split), Some(children)) => {
                let name = &features[split.feature].name;
                let (l, r) = match &split.rule {
                    SplitRule::LessEq(t) => (format!("{name} <= {t}"), format!("{name} > {t}")),
                    SplitRule::Equals(c) => (format!("{name} == {c}"), format!("{name} != {c}")),
                };
                let mut lp = path.clone();
                lp.push(l);
                children.0.leaves(features, lp, out);
                let mut rp = path;
                rp.push(r);
                children.1.leaves(features, rp, out);
            }
            _ => out.push((path, self)),
        }
    }

    pub fn depth_max(&self) -> usize {
        match &self.children {
            Some(c) => c.0.depth_max().max(c.1.depth_max()),
            None => self.depth,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub min_leaf: usize,
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { min_leaf: 7, max_depth: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub features: Vec<FeatureSpec>,
    pub label_names: Vec<String>,
    pub params: TreeParams,
    pub root: Node,
}

/// Gini decrease of splitting `parent` into `left` and its complement.
pub fn split_gain(parent: &[usize], left: &[usize]) -> f64 {
    let n: usize = parent.iter().sum();
    let nl: usize = left.iter().sum();
    let right: Vec<usize> = parent.iter().zip(left).map(|(p, l)| p - l).collect();
    let nr = n - nl;
    let g = gini_unchecked(parent, n);
    g - (nl as f64 / n as f64) * gini_unchecked(left, nl) - (nr as f64 / n as f64) * gini_unchecked(&right, nr)
}

/// Best admissible split of the rows `idx`: both children keep at least
/// `min_leaf` rows and the gain exceeds [`GAIN_TIE`]. Candidates are visited
/// by feature order then ascending threshold (or category), and a later
/// candidate replaces the incumbent only if it is better by more than
/// [`GAIN_TIE`].
pub fn best_split(data: &TreeData, idx: &[usize], min_leaf: usize) -> Option<Split> {
    let n = idx.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let parent = data.counts(idx);
    let mut best: Option<Split> = None;
    let mut consider = |feature: usize, rule: SplitRule, gain: f64| {
        let floor = best.as_ref().map_or(GAIN_TIE, |b| b.gain + GAIN_TIE);
        if gain > floor {
            best = Some(Split { feature, rule, gain });
        }
    };
    for (f, spec) in data.features.iter().enumerate() {
        match spec.kind {
            FeatureKind::Numeric => {
                let mut sorted: Vec<usize> = idx.to_vec();
                sorted.sort_by(|&a, &b| data.num(a, f).total_cmp(&data.num(b, f)));
                let mut left = vec![0; parent.len()];
                for i in 0..n - 1 {
                    left[data.labels[sorted[i]]] += 1;
                    let (a, b) = (data.num(sorted[i], f), data.num(sorted[i + 1], f));
                    if a == b {
                        continue;
                    }
                    let nl = i + 1;
                    if nl < min_leaf || n - nl < min_leaf {
                        continue;
                    }
                    consider(f, SplitRule::LessEq(0.5 * (a + b)), split_gain(&parent, &left));
                }
            }
            FeatureKind::Categorical => {
                let mut cats: Vec<&str> = idx.iter().map(|&i| data.cat(i, f)).collect();
                cats.sort_unstable();
                cats.dedup();
                if cats.len() < 2 {
                    continue;
                }
                for c in cats {
                    let members: Vec<usize> = idx.iter().copied().filter(|&i| data.cat(i, f) == c).collect();
                    if members.len() < min_leaf || n - members.len() < min_leaf {
                        continue;
                    }
                    consider(f, SplitRule::Equals(c.to_string()), split_gain(&parent, &data.counts(&members)));
                }
            }
        }
    }
    best
}

fn grow(data: &TreeData, idx: &[usize], depth: usize, params: &TreeParams) -> Node {
    let counts = data.counts(idx);
    let gini = gini_unchecked(&counts, idx.len());
    let mut node = Node {
        depth,
        samples: idx.len(),
        counts,
        gini,
        split: None,
        children: None,
    };
    if depth >= params.max_depth || gini == 0.0 {
        return node;
    }
    if let Some(split) = best_split(data, idx, params.min_leaf) {
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| split.rule.goes_left(&data.rows[i][split.feature]));
        let left = grow(data, &l, depth + 1, params);
        let right = grow(data, &r, depth + 1, params);
        node.split = Some(split);
        node.children = Some(Box::new((left, right)));
    }
    node
}

pub fn fit_tree(data: &TreeData, params: &TreeParams) -> Result<DecisionTree> {
    data.validate()?;
    if data.rows.is_empty() {
        return Err(LabError::UndefinedTest("tree over zero rows".into()));
    }
    let idx: Vec<usize> = (0..data.rows.len()).collect();
    Ok(DecisionTree {
        features: data.features.clone(),
        label_names: data.label_names.clone(),
        params: *params,
        root: grow(data, &idx, 0, params),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafSummary {
    pub path: Vec<String>,
    pub samples: usize,
    pub gini: f64,
    pub counts: Vec<usize>,
    /// The majority method for purer leaves, otherwise the top set.
    pub methods: Vec<String>,
}

/// Leaves with Gini <= 0.5 report their majority label; noisier leaves list
/// every label at least as frequent as the runner-up.
pub fn leaf_report(tree: &DecisionTree) -> Vec<LeafSummary> {
    let mut leaves = Vec::new();
    tree.root.leaves(&tree.features, Vec::new(), &mut leaves);
    leaves
        .into_iter()
        .map(|(path, node)| {
            let mut ranked: Vec<usize> = (0..node.counts.len()).filter(|&l| node.counts[l] > 0).collect();
            ranked.sort_by(|&a, &b| node.counts[b].cmp(&node.counts[a]).then(a.cmp(&b)));
            let chosen: Vec<usize> = if node.gini <= 0.5 || ranked.len() < 2 {
                ranked.into_iter().take(1).collect()
            } else {
                let runner_up = node.counts[ranked[1]];
                ranked.into_iter().filter(|&l| node.counts[l] >= runner_up).collect()
            };
            LeafSummary {
                path,
                samples: node.samples,
                gini: node.gini,
                counts: node.counts.clone(),
                methods: chosen.iter().map(|&l| tree.label_names[l].clone()).collect(),
            }
        })
        .collect()
}

/// Indented dump, one node per line.
pub fn render_tree(tree: &DecisionTree) -> String {
    fn walk(tree: &DecisionTree, node: &Node, prefix: &str, out: &mut String) {
        let labels: Vec<String> = node
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(l, c)| format!("{}:{c}", tree.label_names[l]))
            .collect();
        let indent = "  ".repeat(node.depth);
        let _ = writeln!(
            out,
            "{indent}{prefix}gini={:.4} samples={} labels={{{}}}",
            node.gini,
            node.samples,
            labels.join(", ")
        );
        if let (Some(split), Some(children)) = (&node.split, &node.children) {
            let name = &tree.features[split.feature].name;
            let (l, r) = match &split.rule {
                SplitRule::LessEq(t) => (format!("{name} <= {t}: "), format!("{name} > {t}: ")),
                SplitRule::Equals(c) => (format!("{name} == {c}: "), format!("{name} != {c}: ")),
            };
            walk(tree, &children.0, &l, out);
            walk(tree, &children.1, &r, out);
        }
    }
    let mut out = String::new();
    walk(tree, &tree.root, "", &mut out);
    out
}

/// Tree features for an outcome grid and the best-method label of each
/// fully observed row.
pub fn tree_data_from_grid(grid: &OutcomeGrid) -> TreeData {
    let num = |name: &str| FeatureSpec {
        name: name.into(),
        kind: FeatureKind::Numeric,
    };
    let cat = |name: &str| FeatureSpec {
        name: name.into(),
        kind: FeatureKind::Categorical,
    };
    let features = vec![
        cat("dataset"),
        num("train_size"),
        num("n_classes"),
        cat("arch"),
        num("dropout"),
        cat("augmentation"),
        cat("initializer"),
        num("penalty"),
        num("budget"),
    ];
    let mut names: Vec<Method> = grid.methods.clone();
    names.sort_by_key(|&m| tie_rank(m));
    let (rows, best) = grid.best_methods();
    let table = rows
        .iter()
        .map(|&r| {
            let s = &grid.settings[r];
            vec![
                FeatureValue::Cat(s.dataset.clone()),
                FeatureValue::Num(s.train_size as f64),
                FeatureValue::Num(s.n_classes as f64),
                FeatureValue::Cat(s.arch.clone()),
                FeatureValue::Num(s.dropout),
                FeatureValue::Cat(s.augmentation.to_string()),
                FeatureValue::Cat(s.initializer.clone()),
                FeatureValue::Num(s.penalty),
                FeatureValue::Num(s.budget as f64),
            ]
        })
        .collect();
    TreeData {
        features,
        rows: table,
        labels: best.iter().map(|m| names.iter().position(|n| n == m).unwrap()).collect(),
        label_names: names.iter().map(|m| m.as_str().to_string()).collect(),
    }
}
