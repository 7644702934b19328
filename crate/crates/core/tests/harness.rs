use std::cell::Cell;
use std::fs;
use std::path::Path;

use reinit_lab::harness::*;
use reinit_lab::model::{Dataset, Network, TrainConfig};
use reinit_lab::numerics::Initializer;
use reinit_lab::reinit::{run_method, Evaluator, Method, ReinitPlan};
use reinit_lab::{LabError, Result};

const CONFIG: &str = r#"{
    "arch": {"name": "MLP_SYNTH"},
    "data": {"kind": "synthetic", "alphas": [1.0, 2.0], "n_train": 64, "n_test": 64},
    "plan": {"k_blocks": 3, "n_repeats": 1, "steps_per_round": 10},
    "matrix": {"methods": ["BL", "WELS", "LW"], "seeds": 2},
    "output": {"margins": true, "weight_size": true, "flatness": {"sigmas": [0.0, 0.01], "n_draws": 2}}
}"#;

fn config() -> ExperimentConfig {
    ExperimentConfig::parse(CONFIG, Path::new("test.json")).unwrap()
}

fn accuracy_columns(dir: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(dir.join(RESULTS_FILE)).unwrap();
    let headers = r.headers().unwrap().clone();
    let keep: Vec<usize> = ["run_id", "train_acc", "val_acc", "test_acc", "total_steps"]
        .iter()
        .map(|c| headers.iter().position(|h| h == *c).unwrap())
        .collect();
    r.records().map(|rec| keep.iter().map(|&i| rec.as_ref().unwrap()[i].to_string()).collect()).collect()
}

#[test]
fn expansion_order_and_ids() {
    let specs = expand(&config());
    assert_eq!(specs.len(), 2 * 3 * 2);
    assert_eq!(specs[0].run_id, "00000_BL_1_wd0_b10_s0");
    assert_eq!(specs[1].seed, 1);
    assert_eq!(specs[2].plan.method, Method::Wels);
    assert_eq!(specs[6].data.alpha(), 2.0);
    let mut ids: Vec<&str> = specs.iter().map(|s| s.run_id.as_str()).collect();
    ids.dedup();
    assert_eq!(ids.len(), specs.len());
}

#[test]
fn reruns_and_worker_counts_reproduce_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_matrix(&config(), a.path(), 1).unwrap();
    let rb = run_matrix(&config(), b.path(), 3).unwrap();
    assert!(ra.iter().all(|r| r.is_ok()));
    assert_eq!(accuracy_columns(a.path()), accuracy_columns(b.path()));
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x.rounds, y.rounds);
        assert_eq!(x.diagnostics, y.diagnostics);
    }
    let header = fs::read_to_string(a.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(header.lines().next().unwrap(), RESULT_COLUMNS.join(","));
    assert_eq!(read_run_records(a.path()).unwrap(), ra);
}

struct CountingEvaluator<'a> {
    inner: &'a Dataset,
    calls: Cell<usize>,
}

impl Evaluator for CountingEvaluator<'_> {
    fn accuracy(&self, network: &Network) -> Result<f64> {
        self.calls.set(self.calls.get() + 1);
        self.inner.accuracy(network)
    }
}

#[test]
fn training_never_depends_on_the_test_set() {
    let (train, test_a) = gen_synthetic(&SyntheticSpec {
        n_train: 64,
        n_test: 64,
        ..SyntheticSpec::with_alpha(1.0, 5)
    })
    .unwrap();
    let (_, test_b) = gen_synthetic(&SyntheticSpec {
        n_train: 64,
        n_test: 100,
        ..SyntheticSpec::with_alpha(1.0, 99)
    })
    .unwrap();
    let arch = mlp_synth(Initializer::HeNormal);
    let cfg = TrainConfig::synthetic();
    for method in [Method::Baseline, Method::Dsd, Method::Lw] {
        let plan = ReinitPlan::new(method, 3, 1, 10);
        let ea = CountingEvaluator {
            inner: &test_a,
            calls: Cell::new(0),
        };
        let eb = CountingEvaluator {
            inner: &test_b,
            calls: Cell::new(0),
        };
        let a = run_method(&plan, &arch, &train, &ea, &cfg, 3).unwrap();
        let b = run_method(&plan, &arch, &train, &eb, &cfg, 3).unwrap();
        // Scored once per finished round, never inside training.
        assert_eq!(ea.calls.get(), a.rounds.len());
        assert_eq!(a.network.params().flat(), b.network.params().flat());
        assert_eq!(a.final_train_acc, b.final_train_acc);
    }
}

#[test]
fn parse_errors_name_field_and_position() {
    let err = ExperimentConfig::parse(&CONFIG.replace("\"seeds\": 2", "\"seeds\": \"two\""), Path::new("x.json"))
        .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let msg = err.to_string();
    assert!(msg.contains("matrix.seeds") && msg.contains("line 5"), "{msg}");

    let err = ExperimentConfig::parse(&CONFIG.replace("MLP_SYNTH", "RESNET"), Path::new("x.json")).unwrap_err();
    assert!(err.to_string().contains("arch.name"), "{err}");

    let err = ExperimentConfig::parse(&CONFIG.replace("\"kind\": \"synthetic\"", "\"kind\": \"audio\""), Path::new("x.json"))
        .unwrap_err();
    assert!(matches!(err, LabError::Parse { .. }));

    let err = ExperimentConfig::parse("{", Path::new("x.json")).unwrap_err();
    assert!(matches!(err, LabError::Parse { .. }));

    let bad = CONFIG.replace("\"n_draws\": 2", "\"n_draws\": 0");
    assert!(matches!(ExperimentConfig::parse(&bad, Path::new("x.json")), Err(LabError::Config(_))));
}

#[test]
fn empty_or_missing_results_are_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_results(dir.path()), Err(LabError::Schema(_))));
    fs::write(dir.path().join(RESULTS_FILE), RESULT_COLUMNS.join(",") + "\n").unwrap();
    let err = read_results(dir.path()).unwrap_err();
    assert!(matches!(err, LabError::Schema(_)));
    assert_eq!(err.exit_code(), 2);
    fs::write(dir.path().join(RESULTS_FILE), "run_id,method\nx,BL\n").unwrap();
    assert!(matches!(read_results(dir.path()), Err(LabError::Schema(_))));
    assert!(matches!(report(dir.path(), ReportKind::Table1), Err(LabError::Schema(_))));
}

#[test]
fn every_report_renders_from_a_small_run() {
    let dir = tempfile::tempdir().unwrap();
    run_matrix(&config(), dir.path(), 2).unwrap();
    for kind in ReportKind::ALL {
        let text = report(dir.path(), kind).unwrap_or_else(|e| panic!("{}: {e}", kind.as_str()));
        assert!(!text.is_empty(), "{}", kind.as_str());
    }
    for file in ["significance.csv", "tree.txt", "margins.csv", "flatness.csv", "weightsize.csv", "speed.csv"] {
        assert!(dir.path().join(file).is_file(), "{file}");
    }
    let sig = fs::read_to_string(dir.path().join("significance.csv")).unwrap();
    assert_eq!(sig.lines().next().unwrap(), "pair,wins,trials,p,star,circle");
    assert!(analyze(dir.path()).unwrap().contains("leaves"));
}

#[test]
fn sweep_records_each_budget() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config();
    c.matrix.methods = vec![Method::Baseline];
    c.data = DataSection::Synthetic {
        alphas: vec![1.0],
        n_train: 32,
        n_test: 32,
    };
    let records = compute_sweep(&c, &[5, 8], dir.path(), 1).unwrap();
    let budgets: Vec<usize> = records.iter().map(|r| r.spec.plan.steps_per_round).collect();
    assert_eq!(budgets, vec![5, 5, 8, 8]);
    assert!(compute_sweep(&c, &[], dir.path(), 1).is_err());
    assert!(compute_sweep(&c, &[0], dir.path(), 1).is_err());
}

#[test]
fn failed_runs_are_recorded_not_fatal() {
    let mut c = config();
    c.matrix.methods = vec![Method::Baseline];
    let mut spec = expand(&c).remove(0);
    spec.arch.name = ArchName::ScnnMini;
    let record = run_one(&c, &spec);
    assert!(!record.is_ok());
    assert!(record.csv_row().last().unwrap().starts_with("failed"));
}

#[test]
fn dataset_csv_round_trip_shape() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = gen_synthetic(&SyntheticSpec {
        n_train: 10,
        n_test: 10,
        ..SyntheticSpec::with_alpha(1.0, 0)
    })
    .unwrap();
    let path = dir.path().join("train.csv");
    write_dataset_csv(&path, &train).unwrap();
    let mut r = csv::Reader::from_path(&path).unwrap();
    assert_eq!(r.headers().unwrap().len(), 129);
    assert_eq!(r.records().count(), 10);
}
