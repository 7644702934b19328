//! Synthetic data, architecture presets, experiment matrices and reports.

pub mod arch;
pub mod checks;
pub mod config;
pub mod data;
pub mod matrix;
pub mod report;

pub use arch::{mlp_synth, scnn_mini, ArchName, ArchPreset};
pub use config::{DataSection, DataSpec, ExperimentConfig, MatrixSection, OutputSection, PlanSection, Seeds};
pub use checks::{gradcheck_arch, GRADCHECK_EPSILON, GRADCHECK_TOLERANCE};
pub use data::{encode_label, gen_images, gen_synthetic, write_dataset_csv, ImageSpec, SyntheticSpec};
pub use matrix::{
    compute_sweep, default_workers, expand, load_data, read_run_records, run_matrix, run_one, RunDiagnostics,
    RunRecord, RunSpec, RunStatus, RESULTS_FILE, RESULT_COLUMNS, WORKERS_ENV,
};
pub use report::{analyze, outcome_grid, read_results, report, ReportKind, ResultRow, TABLE3_PENALTIES};
