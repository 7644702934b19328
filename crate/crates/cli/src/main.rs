use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reinit_lab::harness::{
    analyze, compute_sweep, default_workers, gen_synthetic, gradcheck_arch, report, run_matrix, write_dataset_csv,
    ArchName, ExperimentConfig, ReportKind, SyntheticSpec, GRADCHECK_TOLERANCE, RESULTS_FILE, WORKERS_ENV,
};
use reinit_lab::{LabError, Result};

#[derive(Parser)]
#[command(name = "reinit-lab", version, about = "Reinitialization training lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write train.csv and test.csv.
    Gen {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every cell of a configuration's matrix.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Results directory; defaults to the config's output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Re-run a configuration at several steps-per-round budgets.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        budgets: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Render one report from a results directory.
    Report {
        #[arg(long, value_parser = parse_kind)]
        kind: ReportKind,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Pairwise significance and the setting tree for a results directory.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Finite-difference gradient check of an architecture preset.
    Gradcheck {
        #[arg(long, value_parser = parse_arch)]
        arch: ArchName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_kind(s: &str) -> std::result::Result<ReportKind, String> {
    ReportKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = ReportKind::ALL.iter().map(|k| k.as_str()).collect();
        format!("unknown report kind `{s}`; expected one of {}", names.join(", "))
    })
}

fn parse_arch(s: &str) -> std::result::Result<ArchName, String> {
    ArchName::parse(s).ok_or_else(|| format!("unknown architecture `{s}`"))
}

fn out_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> Result<PathBuf> {
    flag.or_else(|| config.output.dir.clone())
        .ok_or_else(|| LabError::Config("no output directory: pass --out or set output.dir".into()))
}

fn summarize(dir: &Path, records: &[reinit_lab::harness::RunRecord]) {
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    println!(
        "{} runs ({} failed) written to {}",
        records.len(),
        failed,
        dir.join(RESULTS_FILE).display()
    );
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { alpha, seed, out } => {
            let (train, test) = gen_synthetic(&SyntheticSpec::with_alpha(alpha, seed))?;
            fs::create_dir_all(&out)?;
            write_dataset_csv(&out.join("train.csv"), &train)?;
            write_dataset_csv(&out.join("test.csv"), &test)?;
            println!("wrote {} train and {} test rows to {}", train.len(), test.len(), out.display());
        }
        Command::Run { config, out, workers } => {
            let config = ExperimentConfig::load(&config)?;
            let dir = out_dir(out, &config)?;
            let records = run_matrix(&config, &dir, workers.unwrap_or_else(default_workers))?;
            summarize(&dir, &records);
        }
        Command::Sweep {
            config,
            budgets,
            out,
            workers,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let dir = out_dir(out, &config)?;
            let records = compute_sweep(&config, &budgets, &dir, workers.unwrap_or_else(default_workers))?;
            summarize(&dir, &records);
        }
        Command::Report { kind, input } => print!("{}", report(&input, kind)?),
        Command::Analyze { input } => print!("{}", analyze(&input)?),
        Command::Gradcheck { arch, seed } => {
            let mut worst: f64 = 0.0;
            for (mode, r) in gradcheck_arch(arch, seed)? {
                println!(
                    "{} {mode}: max relative error {:.3e} over {} probes",
                    arch.as_str(),
                    r.max_relative_error,
                    r.probed
                );
                worst = worst.max(r.max_relative_error);
            }
            if !(worst < GRADCHECK_TOLERANCE) {
                return Err(LabError::NumericFailure(format!(
                    "gradient error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
