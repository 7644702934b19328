//! Synthetic datasets.
//!
//! Vector task: 128 features, 8 classes. The first three coordinates carry
//! the label in binary (MSB first), bit 1 as `+alpha` and bit 0 as `-alpha`;
//! the remaining 125 coordinates are standard normal noise.
//!
//! Image task: 3x16x16 images where a 4x4 patch at a random position is
//! colored by the label bits (one bit per channel, `+-alpha`), on top of
//! standard normal pixel noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::Dataset;
use crate::numerics::{RngStream, Tensor};

pub const SYNTH_DIM: usize = 128;
pub const SYNTH_CLASSES: usize = 8;
const SIGNAL_BITS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub alpha: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub n_classes: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            alpha: 1.0,
            n_train: 256,
            n_test: 2048,
            dim: SYNTH_DIM,
            n_classes: SYNTH_CLASSES,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn with_alpha(alpha: f64, seed: u64) -> Self {
        SyntheticSpec {
            alpha,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(LabError::Config(format!("alpha {} must be > 0", self.alpha)));
        }
        if self.dim < SIGNAL_BITS {
            return Err(LabError::Config(format!("dim {} < 3", self.dim)));
        }
        if self.n_classes != SYNTH_CLASSES {
            return Err(LabError::Config("synthetic task has exactly 8 classes".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(LabError::Config("n_train and n_test must be positive".into()));
        }
        Ok(())
    }
}

/// Signal coordinates for `label`: MSB first, bit 1 -> `+alpha`.
pub fn encode_label(label: usize, alpha: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (j, v) in out.iter_mut().enumerate() {
        let bit = (label >> (SIGNAL_BITS - 1 - j)) & 1;
        *v = if bit == 1 { alpha } else { -alpha };
    }
    out
}

fn draw_vectors(spec: &SyntheticSpec, n: usize, rng: &RngStream) -> Result<Dataset> {
    let mut g = rng.generator();
    let mut x = Vec::with_capacity(n * spec.dim);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let label = g.random_range(0..spec.n_classes);
        y.push(label);
        x.extend_from_slice(&encode_label(label, spec.alpha));
        for _ in SIGNAL_BITS..spec.dim {
            x.push(g.sample::<f64, _>(StandardNormal));
        }
    }
    Dataset::new(Tensor::from_vec(&[n, spec.dim], x)?, y, spec.n_classes)
}

/// Independent train and test sets for the vector task.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let root = RngStream::root(spec.seed).named("synthetic");
    let train = draw_vectors(spec, spec.n_train, &root.named("train"))?;
    let test = draw_vectors(spec, spec.n_test, &root.named("test"))?;
    Ok((train, test))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageSpec {
    pub alpha: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub size: usize,
    pub patch: usize,
    pub seed: u64,
}

impl Default for ImageSpec {
    fn default() -> Self {
        ImageSpec {
            alpha: 1.0,
            n_train: 256,
            n_test: 1024,
            size: 16,
            patch: 4,
            seed: 0,
        }
    }
}

fn draw_images(spec: &ImageSpec, n: usize, rng: &RngStream) -> Result<Dataset> {
    let s = spec.size;
    let mut g = rng.generator();
    let mut x = Vec::with_capacity(n * 3 * s * s);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let label = g.random_range(0..SYNTH_CLASSES);
        y.push(label);
        let color = encode_label(label, spec.alpha);
        let oy = g.random_range(0..=s - spec.patch);
        let ox = g.random_range(0..=s - spec.patch);
        for &c in color.iter() {
            for py in 0..s {
                for px in 0..s {
                    let noise: f64 = g.sample(StandardNormal);
                    let inside = (oy..oy + spec.patch).contains(&py) && (ox..ox + spec.patch).contains(&px);
                    x.push(noise + if inside { c } else { 0.0 });
                }
            }
        }
    }
    Dataset::new(Tensor::from_vec(&[n, 3, s, s], x)?, y, SYNTH_CLASSES)
}

/// Independent train and test sets for the image task.
pub fn gen_images(spec: &ImageSpec) -> Result<(Dataset, Dataset)> {
    if spec.patch == 0 || spec.patch > spec.size || spec.n_train == 0 || spec.n_test == 0 {
        return Err(LabError::Config(format!("invalid image spec {spec:?}")));
    }
    let root = RngStream::root(spec.seed).named("images");
    Ok((
        draw_images(spec, spec.n_train, &root.named("train"))?,
        draw_images(spec, spec.n_test, &root.named("test"))?,
    ))
}

/// Writes `label,x0,x1,...` rows, inputs flattened row-major.
pub fn write_dataset_csv(path: &std::path::Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let width = data.x.row_len();
    let mut header = vec!["label".to_string()];
    header.extend((0..width).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for (i, &y) in data.y.iter().enumerate() {
        let mut row = vec![y.to_string()];
        row.extend(data.x.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
