//! Expanding a configuration into runs, executing them on a worker pool and
//! persisting the records.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::ArchPreset;
use super::config::{DataSpec, ExperimentConfig};
use super::data::{gen_images, gen_synthetic};
use crate::diagnostics::{flatness_curve, softmax_margins, weight_size, FlatnessCurve, WeightSizeReport};
use crate::error::{LabError, Result};
use crate::model::{Dataset, TrainConfig};
use crate::numerics::{Initializer, RngStream};
use crate::reinit::{run_method, Method, ReinitEvent, ReinitPlan, RoundMetrics, RunOutcome};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "REINIT_LAB_WORKERS";

pub const RESULTS_FILE: &str = "results.csv";
pub const RUNS_DIR: &str = "runs";

/// Columns of `results.csv`, in order.
pub const RESULT_COLUMNS: [&str; 15] = [
    "run_id",
    "method",
    "alpha_or_dataset",
    "arch",
    "seed",
    "penalty",
    "budget",
    "dropout",
    "initializer",
    "train_acc",
    "val_acc",
    "test_acc",
    "total_steps",
    "wall_ms",
    "status",
];

/// Everything needed to execute one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub run_id: String,
    pub arch: ArchPreset,
    pub data: DataSpec,
    pub plan: ReinitPlan,
    pub train: TrainConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// All training margins, ascending.
    pub margins: Option<Vec<f64>>,
    pub weight_size: Option<WeightSizeReport>,
    pub flatness: Option<FlatnessCurve>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { error: String },
}

/// One persisted run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: RunSpec,
    pub status: RunStatus,
    pub rounds: Vec<RoundMetrics>,
    pub reinits: Vec<ReinitEvent>,
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub total_steps: usize,
    pub wall_ms: u64,
    pub diagnostics: RunDiagnostics,
}

impl RunRecord {
    pub fn run_id(&self) -> &str {
        &self.spec.run_id
    }

    pub fn method(&self) -> Method {
        self.spec.plan.method
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// The row written to `results.csv`.
    pub fn csv_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let s = &self.spec;
        vec![
            s.run_id.clone(),
            s.plan.method.to_string(),
            s.data.descriptor(),
            s.arch.name.as_str().to_string(),
            s.seed.to_string(),
            s.train.weight_decay.to_string(),
            s.plan.steps_per_round.to_string(),
            s.arch.dropout.to_string(),
            s.arch.initializer.name().to_string(),
            opt(self.train_acc),
            opt(self.val_acc),
            opt(self.test_acc),
            self.total_steps.to_string(),
            self.wall_ms.to_string(),
            match &self.status {
                RunStatus::Ok => "ok".to_string(),
                RunStatus::Failed { error } => format!("failed: {error}"),
            },
        ]
    }
}

/// Dense cartesian expansion of the matrix, in a fixed order:
/// budget, penalty, dropout, initializer, alpha, method, seed.
pub fn expand(config: &ExperimentConfig) -> Vec<RunSpec> {
    let mut specs = Vec::new();
    for budget in config.budgets() {
        for penalty in config.penalties() {
            for dropout in config.dropouts() {
                for initializer in config.initializers() {
                    for &alpha in config.data.alphas() {
                        for &method in &config.matrix.methods {
                            for seed in config.matrix.seeds.values() {
                                let plan = ReinitPlan {
                                    method,
                                    fraction: config.plan.fraction,
                                    k_blocks: config.plan.k_blocks,
                                    n_repeats: config.plan.n_repeats,
                                    steps_per_round: budget,
                                    schedule: config.plan.schedule,
                                    lw_flags: config.plan.lw_flags,
                                };
                                let data = config.data.spec(alpha, seed);
                                let run_id = format!(
                                    "{:05}_{}_{}_wd{}_b{}_s{}",
                                    specs.len(),
                                    method,
                                    data.descriptor().replace(':', "-"),
                                    penalty,
                                    budget,
                                    seed
                                );
                                specs.push(RunSpec {
                                    run_id,
                                    arch: ArchPreset {
                                        name: config.arch.name,
                                        dropout,
                                        initializer,
                                    },
                                    data,
                                    plan,
                                    train: TrainConfig {
                                        weight_decay: penalty,
                                        ..config.train.clone()
                                    },
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    specs
}

pub fn load_data(spec: &DataSpec) -> Result<(Dataset, Dataset)> {
    match spec {
        DataSpec::Synthetic(s) => gen_synthetic(s),
        DataSpec::Images(s) => gen_images(s),
    }
}

fn diagnose(config: &ExperimentConfig, outcome: &mut RunOutcome, seed: u64) -> Result<RunDiagnostics> {
    let out = &config.output;
    let train = &outcome.data.train;
    let mut diag = RunDiagnostics::default();
    if out.margins {
        diag.margins = Some(softmax_margins(&outcome.network, train)?.margins);
    }
    if out.weight_size {
        diag.weight_size = Some(weight_size(&outcome.network, &outcome.sample)?);
    }
    if let Some(f) = &out.flatness {
        let rng = RngStream::root(seed).named("flatness");
        diag.flatness = Some(flatness_curve(&mut outcome.network, train, &f.sigmas, f.n_draws, &rng)?);
    }
    Ok(diag)
}

/// Executes one run. Errors are returned, not recorded; see [`run_one`].
pub fn execute(config: &ExperimentConfig, spec: &RunSpec) -> Result<(RunOutcome, RunDiagnostics)> {
    let (train, test) = load_data(&spec.data)?;
    let mut outcome = run_method(&spec.plan, &spec.arch.spec(), &train, &test, &spec.train, spec.seed)?;
    let diag = diagnose(config, &mut outcome, spec.seed)?;
    Ok((outcome, diag))
}

/// Executes one run, turning any failure into a failed record.
pub fn run_one(config: &ExperimentConfig, spec: &RunSpec) -> RunRecord {
    let start = Instant::now();
    let result = execute(config, spec);
    let wall_ms = start.elapsed().as_millis() as u64;
    match result {
        Ok((o, diagnostics)) => RunRecord {
            spec: spec.clone(),
            status: RunStatus::Ok,
            train_acc: Some(o.final_train_acc),
            val_acc: o.final_val_acc,
            test_acc: Some(o.final_test_acc),
            total_steps: o.total_steps,
            rounds: o.rounds,
            reinits: o.reinits,
            wall_ms,
            diagnostics,
        },
        Err(e) => {
            log::warn!("run {} failed: {e}", spec.run_id);
            RunRecord {
                spec: spec.clone(),
                status: RunStatus::Failed { error: e.to_string() },
                rounds: Vec::new(),
                reinits: Vec::new(),
                train_acc: None,
                val_acc: None,
                test_acc: None,
                total_steps: 0,
                wall_ms,
                diagnostics: RunDiagnostics::default(),
            }
        }
    }
}

/// Worker count from [`WORKERS_ENV`], else the machine's parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs the whole matrix on `workers` threads and writes `results.csv`
/// (plus `runs/<run_id>.json` unless disabled) under `out_dir`. Records come
/// back sorted by run id whatever the completion order.
pub fn run_matrix(config: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<Vec<RunRecord>> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let specs = expand(config);
    log::info!("running {} runs on {workers} workers", specs.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LabError::Config(format!("worker pool: {e}")))?;
    let mut records: Vec<RunRecord> = pool.install(|| specs.par_iter().map(|s| run_one(config, s)).collect());
    records.sort_by(|a, b| a.run_id().cmp(b.run_id()));
    write_records(&records, out_dir, config.output.per_run_json())?;
    Ok(records)
}

/// Re-runs the matrix once per steps-per-round budget. Every record carries
/// its budget in the `budget` column.
pub fn compute_sweep(
    config: &ExperimentConfig,
    budgets: &[usize],
    out_dir: &Path,
    workers: usize,
) -> Result<Vec<RunRecord>> {
    if budgets.is_empty() || budgets.contains(&0) {
        return Err(LabError::Config("sweep budgets must be non-empty and positive".into()));
    }
    let mut sweep = config.clone();
    sweep.matrix.budgets = Some(budgets.to_vec());
    run_matrix(&sweep, out_dir, workers)
}

pub fn write_records(records: &[RunRecord], out_dir: &Path, per_run_json: bool) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join(RESULTS_FILE))?;
    w.write_record(RESULT_COLUMNS)?;
    for r in records {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    if per_run_json {
        let dir = out_dir.join(RUNS_DIR);
        fs::create_dir_all(&dir)?;
        for r in records {
            fs::write(dir.join(format!("{}.json", r.run_id())), serde_json::to_string_pretty(r)?)?;
        }
    }
    Ok(())
}

/// Per-run JSON documents under `dir/runs`, sorted by run id.
pub fn read_run_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let runs = dir.join(RUNS_DIR);
    if !runs.is_dir() {
        return Err(LabError::Schema(format!("{} has no per-run records", dir.display())));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&runs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| LabError::Parse {
                path: p.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Initializer names as written in `results.csv`.
pub fn initializer_from_name(name: &str) -> Option<Initializer> {
    [Initializer::HeNormal, Initializer::XavierUniform].into_iter().find(|i| i.name() == name)
}
