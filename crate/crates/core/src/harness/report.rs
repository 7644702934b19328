//! Summaries over a results directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::{read_run_records, RunRecord, RESULTS_FILE, RESULT_COLUMNS};
use crate::diagnostics::{write_flatness, write_margins, write_weight_size, FlatnessCurve, MarginReport};
use crate::error::{LabError, Result};
use crate::metalab::{
    fit_tree, leaf_report, pairwise_significance, render_tree, tie_rank, tree_data_from_grid, OutcomeGrid, Setting,
    SignificanceTable, TreeParams,
};
use crate::reinit::Method;

pub const TABLE3_PENALTIES: [f64; 6] = [0.0, 0.005, 0.01, 0.02, 0.05, 0.1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Table1,
    Table3,
    Significance,
    Tree,
    Margins,
    Flatness,
    Speed,
    WeightSize,
}

impl ReportKind {
    pub const ALL: [ReportKind; 8] = [
        ReportKind::Table1,
        ReportKind::Table3,
        ReportKind::Significance,
        ReportKind::Tree,
        ReportKind::Margins,
        ReportKind::Flatness,
        ReportKind::Speed,
        ReportKind::WeightSize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::Table1 => "table1",
            ReportKind::Table3 => "table3",
            ReportKind::Significance => "significance",
            ReportKind::Tree => "tree",
            ReportKind::Margins => "margins",
            ReportKind::Flatness => "flatness",
            ReportKind::Speed => "speed",
            ReportKind::WeightSize => "weightsize",
        }
    }

    pub fn parse(s: &str) -> Option<ReportKind> {
        ReportKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// One row of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub method: String,
    pub alpha_or_dataset: String,
    pub arch: String,
    pub seed: u64,
    pub penalty: f64,
    pub budget: usize,
    pub dropout: f64,
    pub initializer: String,
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub total_steps: usize,
    pub wall_ms: u64,
    #[serde(default)]
    pub status: Option<String>,
}

/// Reads `dir/results.csv`, rejecting missing files, missing columns and
/// files without rows.
pub fn read_results(dir: &Path) -> Result<Vec<ResultRow>> {
    let path = dir.join(RESULTS_FILE);
    if !path.is_file() {
        return Err(LabError::Schema(format!("{} not found", path.display())));
    }
    let mut reader = csv::Reader::from_path(&path)?;
    let headers = reader.headers()?.clone();
    let missing: Vec<&str> = RESULT_COLUMNS[..RESULT_COLUMNS.len() - 1]
        .iter()
        .copied()
        .filter(|c| !headers.iter().any(|h| h == *c))
        .collect();
    if !missing.is_empty() {
        return Err(LabError::Schema(format!(
            "{} is missing columns: {}",
            path.display(),
            missing.join(", ")
        )));
    }
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let row: ResultRow =
            row.map_err(|e| LabError::Schema(format!("{} row {}: {e}", path.display(), i + 2)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(LabError::Schema(format!("{} has no rows", path.display())));
    }
    Ok(rows)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn method_order(names: impl Iterator<Item = String>) -> Vec<String> {
    let mut v: Vec<String> = names.collect();
    v.sort_by_key(|m| (Method::parse(m).map_or(usize::MAX, tie_rank), m.clone()));
    v.dedup();
    v
}

fn numeric_key(s: &str) -> (f64, String) {
    (s.parse::<f64>().unwrap_or(f64::INFINITY), s.to_string())
}

/// `mean ± std` of test accuracy per cell; `rows` picks the row header.
fn accuracy_table(
    rows: &[ResultRow],
    row_label: &str,
    row_key: impl Fn(&ResultRow) -> String,
    forced_rows: &[String],
    forced_methods: &[&str],
) -> String {
    let mut groups: BTreeMap<(String, String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let (fixed_a, fixed_b) = if row_label == "alpha" {
            (format!("penalty={}", r.penalty), format!("budget={}", r.budget))
        } else {
            (format!("alpha={}", r.alpha_or_dataset), format!("budget={}", r.budget))
        };
        groups.entry((r.arch.clone(), fixed_a, fixed_b)).or_default().push(r);
    }
    let mut out = String::new();
    for ((arch, a, b), group) in groups {
        let present = method_order(group.iter().map(|r| r.method.clone()));
        let mut methods: Vec<String> = forced_methods.iter().map(|m| m.to_string()).collect();
        methods.extend(present.into_iter().filter(|m| !forced_methods.contains(&m.as_str())));
        let mut keys: Vec<String> = group.iter().map(|r| row_key(r)).collect();
        keys.extend(forced_rows.iter().cloned());
        keys.sort_by(|x, y| numeric_key(x).partial_cmp(&numeric_key(y)).unwrap());
        keys.dedup();
        let _ = writeln!(out, "# arch={arch} {a} {b}");
        let _ = write!(out, "{row_label:<10}");
        for m in &methods {
            let _ = write!(out, " {m:>18}");
        }
        out.push('\n');
        for key in keys {
            let _ = write!(out, "{key:<10}");
            for m in &methods {
                let accs: Vec<f64> = group
                    .iter()
                    .filter(|r| &r.method == m && row_key(r) == key)
                    .filter_map(|r| r.test_acc)
                    .collect();
                let cell = if accs.is_empty() {
                    "-".to_string()
                } else {
                    let (mean, std) = mean_std(&accs);
                    format!("{mean:.3} ± {std:.3} (n={})", accs.len())
                };
                let _ = write!(out, " {cell:>18}");
            }
            out.push('\n');
        }
    }
    out
}

/// Mean ± std test accuracy per (alpha, method).
pub fn table1(rows: &[ResultRow]) -> String {
    accuracy_table(rows, "alpha", |r| r.alpha_or_dataset.clone(), &[], &[])
}

/// Mean ± std test accuracy per (penalty, method); the standard penalty
/// rows always appear.
pub fn table3(rows: &[ResultRow]) -> String {
    let forced: Vec<String> = TABLE3_PENALTIES.iter().map(|p| p.to_string()).collect();
    accuracy_table(rows, "penalty", |r| r.penalty.to_string(), &forced, &["BL", "RESCALE_ONLY", "LW"])
}

/// Builds the outcome grid from successful rows. With `per_seed` each seed
/// is its own setting; otherwise cells hold the mean over seeds.
pub fn outcome_grid(rows: &[ResultRow], train_sizes: &BTreeMap<String, usize>, per_seed: bool) -> Result<OutcomeGrid> {
    let methods: Vec<Method> = method_order(rows.iter().map(|r| r.method.clone()))
        .iter()
        .map(|m| Method::parse(m).ok_or_else(|| LabError::Schema(format!("unknown method {m}"))))
        .collect::<Result<_>>()?;
    type Key = (String, String, String, String, String, String, Option<u64>);
    let mut cells: BTreeMap<Key, BTreeMap<Method, Vec<f64>>> = BTreeMap::new();
    let mut settings: BTreeMap<Key, Setting> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status.as_deref().is_none_or(|s| s == "ok")) {
        let Some(acc) = r.test_acc else { continue };
        let key: Key = (
            r.arch.clone(),
            r.alpha_or_dataset.clone(),
            r.penalty.to_string(),
            r.budget.to_string(),
            r.dropout.to_string(),
            r.initializer.clone(),
            per_seed.then_some(r.seed),
        );
        let method = Method::parse(&r.method).ok_or_else(|| LabError::Schema(format!("unknown method {}", r.method)))?;
        cells.entry(key.clone()).or_default().entry(method).or_default().push(acc);
        settings.entry(key).or_insert_with(|| Setting {
            dataset: r.alpha_or_dataset.clone(),
            arch: r.arch.clone(),
            dropout: r.dropout,
            augmentation: false,
            initializer: r.initializer.clone(),
            train_size: train_sizes.get(&r.run_id).copied().unwrap_or(0),
            n_classes: 8,
            penalty: r.penalty,
            budget: r.budget,
        });
    }
    let mut grid = OutcomeGrid::new(methods.clone());
    for (key, by_method) in cells {
        let accs = methods
            .iter()
            .map(|m| by_method.get(m).map(|v| v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        grid.push(settings.remove(&key).expect("setting recorded with cell"), accs)?;
    }
    Ok(grid)
}

fn train_sizes(dir: &Path) -> BTreeMap<String, usize> {
    read_run_records(dir)
        .map(|recs| recs.iter().map(|r| (r.run_id().to_string(), r.spec.data.n_train())).collect())
        .unwrap_or_default()
}

pub fn significance(dir: &Path, per_seed: bool) -> Result<SignificanceTable> {
    let rows = read_results(dir)?;
    let grid = outcome_grid(&rows, &train_sizes(dir), per_seed)?;
    let table = pairwise_significance(&grid, 0.05)?;
    table.write_csv(fs::File::create(dir.join("significance.csv"))?)?;
    Ok(table)
}

pub fn render_significance(table: &SignificanceTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<32} {:>5} {:>6} {:>10} star circle", "pair (row<col)", "wins", "trials", "p");
    for p in &table.pairs {
        let pv = p.p_value.map_or_else(|| "no-evidence".to_string(), |v| format!("{v:.3e}"));
        let _ = writeln!(
            out,
            "{:<32} {:>5} {:>6} {:>10} {:>4} {:>6}",
            p.label(),
            p.wins,
            p.trials(),
            pv,
            if p.star { "*" } else { "" },
            if p.circle { "o" } else { "" }
        );
    }
    out
}

pub fn tree(dir: &Path, per_seed: bool) -> Result<String> {
    let rows = read_results(dir)?;
    let grid = outcome_grid(&rows, &train_sizes(dir), per_seed)?;
    let data = tree_data_from_grid(&grid);
    if data.rows.is_empty() {
        return Err(LabError::Schema("no setting has every method observed".into()));
    }
    let tree = fit_tree(&data, &TreeParams::default())?;
    let mut text = render_tree(&tree);
    text.push_str("\n# leaves\n");
    for leaf in leaf_report(&tree) {
        let cond = if leaf.path.is_empty() {
            "(root)".to_string()
        } else {
            leaf.path.join(" & ")
        };
        let _ = writeln!(
            text,
            "{cond}: {} (gini={:.3}, samples={})",
            leaf.methods.join(", "),
            leaf.gini,
            leaf.samples
        );
    }
    fs::write(dir.join("tree.txt"), &text)?;
    Ok(text)
}

fn ok_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let recs: Vec<RunRecord> = read_run_records(dir)?.into_iter().filter(RunRecord::is_ok).collect();
    if recs.is_empty() {
        return Err(LabError::Schema(format!("{} has no successful runs", dir.display())));
    }
    Ok(recs)
}

fn group_label(r: &RunRecord) -> String {
    format!("{} alpha={} {}", r.spec.arch.name.as_str(), r.spec.data.descriptor(), r.method())
}

pub fn margins(dir: &Path) -> Result<String> {
    let recs = ok_records(dir)?;
    let rows: Vec<(String, MarginReport)> = recs
        .iter()
        .filter_map(|r| {
            r.diagnostics.margins.as_ref().map(|m| {
                (
                    r.run_id().to_string(),
                    MarginReport {
                        margins: m.clone(),
                        smallest_m: crate::diagnostics::DEFAULT_SMALLEST,
                    },
                )
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(LabError::Schema("no run recorded margins".into()));
    }
    write_margins(fs::File::create(dir.join("margins.csv"))?, &rows)?;
    let mut by_group: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (r, (_, m)) in recs.iter().filter(|r| r.diagnostics.margins.is_some()).zip(&rows) {
        by_group.entry(group_label(r)).or_default().push(m.mean_smallest(50));
    }
    let mut out = String::from("mean of the 50 smallest training margins\n");
    for (g, v) in by_group {
        let (mean, std) = mean_std(&v);
        let _ = writeln!(out, "{g:<40} {mean:.4} ± {std:.4} (n={})", v.len());
    }
    Ok(out)
}

pub fn flatness(dir: &Path) -> Result<String> {
    let recs = ok_records(dir)?;
    let rows: Vec<(String, FlatnessCurve)> = recs
        .iter()
        .filter_map(|r| r.diagnostics.flatness.clone().map(|f| (r.run_id().to_string(), f)))
        .collect();
    if rows.is_empty() {
        return Err(LabError::Schema("no run recorded a flatness probe".into()));
    }
    write_flatness(fs::File::create(dir.join("flatness.csv"))?, &rows)?;
    let mut by_group: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in recs.iter() {
        if let Some(f) = &r.diagnostics.flatness {
            for p in &f.points {
                by_group
                    .entry((group_label(r), format!("{}", p.sigma_noise)))
                    .or_default()
                    .push(p.mean_delta_acc);
            }
        }
    }
    let mut out = String::from("mean change in training accuracy under parameter noise\n");
    for ((g, sigma), v) in by_group {
        let (mean, std) = mean_std(&v);
        let _ = writeln!(out, "{g:<40} sigma={sigma:<6} {mean:+.4} ± {std:.4}");
    }
    Ok(out)
}

pub fn weight_sizes(dir: &Path) -> Result<String> {
    let recs = ok_records(dir)?;
    let rows: Vec<_> = recs
        .iter()
        .filter_map(|r| r.diagnostics.weight_size.clone().map(|w| (r.run_id().to_string(), w)))
        .collect();
    if rows.is_empty() {
        return Err(LabError::Schema("no run recorded weight sizes".into()));
    }
    write_weight_size(fs::File::create(dir.join("weightsize.csv"))?, &rows)?;
    let mut by_group: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &recs {
        if let Some(w) = &r.diagnostics.weight_size {
            by_group.entry(group_label(r)).or_default().push(w.head_measure);
        }
    }
    let mut out = String::from("head measure (||head input||_F * ||head weight||_F)\n");
    for (g, v) in by_group {
        let (mean, std) = mean_std(&v);
        let _ = writeln!(out, "{g:<40} {mean:.4} ± {std:.4}");
    }
    Ok(out)
}

pub const SPEED_THRESHOLD_KEY: &str = "0.99";

pub fn speed(dir: &Path) -> Result<String> {
    let recs = ok_records(dir)?;
    let mut w = csv::Writer::from_path(dir.join("speed.csv"))?;
    w.write_record(["run_id", "round", "kept_block", "steps_to_0.99"])?;
    let mut out = String::from("steps to 99% training accuracy per round\n");
    for r in &recs {
        let steps: Vec<String> = r
            .rounds
            .iter()
            .map(|m| {
                m.steps_to
                    .get(SPEED_THRESHOLD_KEY)
                    .copied()
                    .flatten()
                    .map_or_else(|| "unreached".to_string(), |s| s.to_string())
            })
            .collect();
        for (m, s) in r.rounds.iter().zip(&steps) {
            w.write_record([r.run_id(), &m.index.to_string(), &m.kept_block.to_string(), s])?;
        }
        let _ = writeln!(out, "{:<40} {}", r.run_id(), steps.join(" "));
    }
    w.flush()?;
    Ok(out)
}

/// Runs one report kind over `dir`, writing its artifact there, and returns
/// the printable summary.
pub fn report(dir: &Path, kind: ReportKind) -> Result<String> {
    match kind {
        ReportKind::Table1 => Ok(table1(&read_results(dir)?)),
        ReportKind::Table3 => Ok(table3(&read_results(dir)?)),
        ReportKind::Significance => Ok(render_significance(&significance(dir, true)?)),
        ReportKind::Tree => tree(dir, true),
        ReportKind::Margins => margins(dir),
        ReportKind::Flatness => flatness(dir),
        ReportKind::Speed => speed(dir),
        ReportKind::WeightSize => weight_sizes(dir),
    }
}

/// Significance table and decision tree together.
pub fn analyze(dir: &Path) -> Result<String> {
    let mut out = render_significance(&significance(dir, true)?);
    out.push('\n');
    out.push_str(&tree(dir, true)?);
    Ok(out)
}
