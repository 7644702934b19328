//! The experiment configuration document.
//!
//! ```json
//! {
//!   "arch":   {"name": "MLP_SYNTH"},
//!   "data":   {"kind": "synthetic", "alphas": [0.5, 1.0, 2.0]},
//!   "train":  {"learning_rate": 0.05},
//!   "plan":   {"k_blocks": 3, "n_repeats": 3, "steps_per_round": 200},
//!   "matrix": {"methods": ["BL", "LW"], "seeds": 20},
//!   "output": {"margins": true}
//! }
//! ```
//!
//! `train` overlays the protocol default of the data kind: full-batch
//! gradient descent for the vector task, the minibatch SGD protocol with a
//! validation split for images.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::ArchPreset;
use super::data::{ImageSpec, SyntheticSpec};
use crate::error::{LabError, Result};
use crate::model::TrainConfig;
use crate::numerics::Initializer;
use crate::reinit::{LwFlags, Method, ScheduleVariant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSection {
    Synthetic {
        alphas: Vec<f64>,
        #[serde(default = "default_n_train")]
        n_train: usize,
        #[serde(default = "default_n_test_vectors")]
        n_test: usize,
    },
    Images {
        alphas: Vec<f64>,
        #[serde(default = "default_n_train")]
        n_train: usize,
        #[serde(default = "default_n_test_images")]
        n_test: usize,
    },
}

fn default_n_train() -> usize {
    256
}
fn default_n_test_vectors() -> usize {
    2048
}
fn default_n_test_images() -> usize {
    1024
}

/// One concrete dataset of the matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    Synthetic(SyntheticSpec),
    Images(ImageSpec),
}

impl DataSpec {
    pub fn alpha(&self) -> f64 {
        match self {
            DataSpec::Synthetic(s) => s.alpha,
            DataSpec::Images(s) => s.alpha,
        }
    }

    pub fn n_train(&self) -> usize {
        match self {
            DataSpec::Synthetic(s) => s.n_train,
            DataSpec::Images(s) => s.n_train,
        }
    }

    /// Value of the `alpha_or_dataset` column.
    pub fn descriptor(&self) -> String {
        match self {
            DataSpec::Synthetic(s) => format!("{}", s.alpha),
            DataSpec::Images(s) => format!("images:{}", s.alpha),
        }
    }
}

impl DataSection {
    pub fn alphas(&self) -> &[f64] {
        match self {
            DataSection::Synthetic { alphas, .. } | DataSection::Images { alphas, .. } => alphas,
        }
    }

    pub fn spec(&self, alpha: f64, seed: u64) -> DataSpec {
        match *self {
            DataSection::Synthetic { n_train, n_test, .. } => DataSpec::Synthetic(SyntheticSpec {
                n_train,
                n_test,
                ..SyntheticSpec::with_alpha(alpha, seed)
            }),
            DataSection::Images { n_train, n_test, .. } => DataSpec::Images(ImageSpec {
                alpha,
                n_train,
                n_test,
                seed,
                ..ImageSpec::default()
            }),
        }
    }

    fn protocol(&self) -> TrainConfig {
        match self {
            DataSection::Synthetic { .. } => TrainConfig::synthetic(),
            DataSection::Images { .. } => TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub k_blocks: usize,
    pub n_repeats: usize,
    pub steps_per_round: usize,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub schedule: ScheduleVariant,
    #[serde(default)]
    pub lw_flags: LwFlags,
}

fn default_fraction() -> f64 {
    0.2
}

/// Seeds as an explicit list or a count starting at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn values(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSection {
    pub methods: Vec<Method>,
    pub seeds: Seeds,
    /// Weight-decay values; defaults to the `train` section's.
    #[serde(default)]
    pub penalties: Option<Vec<f64>>,
    /// Steps-per-round values; defaults to the plan's.
    #[serde(default)]
    pub budgets: Option<Vec<usize>>,
    #[serde(default)]
    pub dropouts: Option<Vec<f64>>,
    #[serde(default)]
    pub initializers: Option<Vec<Initializer>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatnessSection {
    pub sigmas: Vec<f64>,
    pub n_draws: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Results directory used when the command line does not name one.
    pub dir: Option<std::path::PathBuf>,
    /// Write one JSON document per run next to `results.csv`.
    pub per_run_json: Option<bool>,
    pub margins: bool,
    pub weight_size: bool,
    pub flatness: Option<FlatnessSection>,
}

impl OutputSection {
    pub fn per_run_json(&self) -> bool {
        self.per_run_json.unwrap_or(true)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub arch: ArchPreset,
    pub data: DataSection,
    pub train: TrainConfig,
    pub plan: PlanSection,
    pub matrix: MatrixSection,
    pub output: OutputSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    arch: ArchPreset,
    data: DataSection,
    #[serde(default)]
    train: serde_json::Map<String, serde_json::Value>,
    plan: PlanSection,
    matrix: MatrixSection,
    #[serde(default)]
    output: OutputSection,
}

fn parse_error(path: &Path, message: String) -> LabError {
    LabError::Parse {
        path: path.to_path_buf(),
        message,
    }
}

impl ExperimentConfig {
    /// Parses a configuration document. Errors name the offending field
    /// path together with the line and column.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            parse_error(
                path,
                format!("field `{field}` at line {} column {}: {inner}", inner.line(), inner.column()),
            )
        })?;

        let mut train = serde_json::to_value(raw.data.protocol())?;
        let slots = train.as_object_mut().expect("struct serializes to an object");
        for (key, value) in raw.train {
            if !slots.contains_key(&key) {
                return Err(parse_error(path, format!("field `train.{key}`: unknown training option")));
            }
            slots.insert(key, value);
        }
        let train: TrainConfig = serde_path_to_error::deserialize(train)
            .map_err(|e| parse_error(path, format!("field `train.{}`: {}", e.path(), e.inner())))?;

        let config = ExperimentConfig {
            arch: raw.arch,
            data: raw.data,
            train,
            plan: raw.plan,
            matrix: raw.matrix,
            output: raw.output,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.data.alphas().is_empty() {
            return Err(LabError::Config("data.alphas is empty".into()));
        }
        if let Some(a) = self.data.alphas().iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(LabError::Config(format!("data.alphas: {a} must be > 0")));
        }
        if self.matrix.methods.is_empty() {
            return Err(LabError::Config("matrix.methods is empty".into()));
        }
        if self.matrix.seeds.values().is_empty() {
            return Err(LabError::Config("matrix.seeds is empty".into()));
        }
        if self.budgets().contains(&0) {
            return Err(LabError::Config("steps per round must be positive".into()));
        }
        if let Some(p) = self.penalties().iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(LabError::Config(format!("matrix.penalties: {p} must be >= 0")));
        }
        if let Some(d) = self.dropouts().iter().find(|d| !(0.0..1.0).contains(*d)) {
            return Err(LabError::Config(format!("matrix.dropouts: {d} outside [0, 1)")));
        }
        if let Some(f) = &self.output.flatness {
            if f.n_draws == 0 || !f.sigmas.contains(&0.0) {
                return Err(LabError::Config("output.flatness needs n_draws >= 1 and sigma 0".into()));
            }
        }
        Ok(())
    }

    pub fn penalties(&self) -> Vec<f64> {
        self.matrix.penalties.clone().unwrap_or_else(|| vec![self.train.weight_decay])
    }

    pub fn budgets(&self) -> Vec<usize> {
        self.matrix.budgets.clone().unwrap_or_else(|| vec![self.plan.steps_per_round])
    }

    pub fn dropouts(&self) -> Vec<f64> {
        self.matrix.dropouts.clone().unwrap_or_else(|| vec![self.arch.dropout])
    }

    pub fn initializers(&self) -> Vec<Initializer> {
        self.matrix.initializers.clone().unwrap_or_else(|| vec![self.arch.initializer])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "arch": {"name": "MLP_SYNTH"},
        "data": {"kind": "synthetic", "alphas": [1.0]},
        "plan": {"k_blocks": 3, "n_repeats": 3, "steps_per_round": 200},
        "matrix": {"methods": ["BL", "LW"], "seeds": 2}
    }"#;

    #[test]
    fn minimal_document_gets_protocol_defaults() {
        let c = ExperimentConfig::parse(MINIMAL, Path::new("m.json")).unwrap();
        assert_eq!(c.train, TrainConfig::synthetic());
        assert_eq!(c.matrix.seeds.values(), vec![0, 1]);
        assert_eq!(c.budgets(), vec![200]);
        assert!(c.output.per_run_json());
    }

    #[test]
    fn train_overlay() {
        let text = MINIMAL.replace("\"plan\"", "\"train\": {\"weight_decay\": 0.01}, \"plan\"");
        let c = ExperimentConfig::parse(&text, Path::new("m.json")).unwrap();
        assert_eq!(c.train.weight_decay, 0.01);
        assert_eq!(c.train.learning_rate, 0.05);
    }

    #[test]
    fn errors_name_the_field() {
        let text = MINIMAL.replace("\"steps_per_round\": 200", "\"steps_per_round\": \"many\"");
        let err = ExperimentConfig::parse(&text, Path::new("m.json")).unwrap_err().to_string();
        assert!(err.contains("plan.steps_per_round"), "{err}");
        assert!(err.contains("line 4"), "{err}");

        let text = MINIMAL.replace("\"BL\"", "\"XYZ\"");
        let err = ExperimentConfig::parse(&text, Path::new("m.json")).unwrap_err().to_string();
        assert!(err.contains("matrix.methods"), "{err}");

        let text = MINIMAL.replace("\"plan\"", "\"train\": {\"lr\": 1}, \"plan\"");
        let err = ExperimentConfig::parse(&text, Path::new("m.json")).unwrap_err().to_string();
        assert!(err.contains("train.lr"), "{err}");
    }

    #[test]
    fn zero_budget_rejected() {
        let text = MINIMAL.replace("\"seeds\": 2", "\"seeds\": 2, \"budgets\": [50, 0]");
        assert!(matches!(
            ExperimentConfig::parse(&text, Path::new("m.json")),
            Err(LabError::Config(_))
        ));
    }
}
