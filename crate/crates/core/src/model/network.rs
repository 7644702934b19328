use serde::{Deserialize, Serialize};

use super::layer::{Cache, Conv2D, Dense, Layer, Mode};
use super::params::{ParamRole, ParameterStore};
use crate::error::{LabError, Result};
use crate::numerics::{frobenius_norm, Initializer, LabRng, Objective, RngStream, Tensor};

/// Architecture-level description of one layer, before parameters exist.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        units: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    Conv2D {
        filters: usize,
        #[serde(default = "three")]
        kernel: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    MaxPool2D {
        size: usize,
    },
    Flatten,
    ReLU,
    Dropout {
        rate: f64,
    },
    FeatureNorm,
}

fn yes() -> bool {
    true
}

fn three() -> usize {
    3
}

pub const FEATURE_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: String,
    /// Per-example input shape: `[features]` or `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub blocks: Vec<Vec<LayerSpec>>,
    /// Number of designated feature blocks `K` (blocks `1..=K`).
    pub k_blocks: usize,
    /// 0-based index of the first block holding the final fully-connected
    /// layers. Defaults to `K` when `K < blocks.len()`.
    pub fc_start: Option<usize>,
    #[serde(default)]
    pub initializer: Initializer,
    pub n_classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub layers: Vec<Layer>,
}

impl Block {
    /// Layers excluding a trailing [`Layer::LambdaNorm`].
    pub fn body(&self) -> &[Layer] {
        match self.layers.last() {
            Some(Layer::LambdaNorm { .. }) => &self.layers[..self.layers.len() - 1],
            _ => &self.layers,
        }
    }

    pub fn lambda(&self) -> Option<(f64, f64)> {
        match self.layers.last() {
            Some(Layer::LambdaNorm { mu, sigma }) => Some((*mu, *sigma)),
            _ => None,
        }
    }
}

/// A block-structured classifier. The final layer of the final block must be
/// the dense classifier head; softmax is applied on top of it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    input_shape: Vec<usize>,
    blocks: Vec<Block>,
    k_blocks: usize,
    fc_start: usize,
    n_classes: usize,
    initializer: Initializer,
    params: ParameterStore,
    init_scales: Option<Vec<f64>>,
    frozen: Vec<bool>,
}

impl Network {
    /// Builds the network and draws its initial parameters (weights from the
    /// configured initializer, biases at zero).
    pub fn build(spec: &ArchSpec, rng: &RngStream) -> Result<Network> {
        if spec.blocks.is_empty() || spec.k_blocks == 0 || spec.k_blocks > spec.blocks.len() {
            return Err(LabError::InvalidArchitecture(format!(
                "K = {} must satisfy 1 <= K <= {} blocks",
                spec.k_blocks,
                spec.blocks.len()
            )));
        }
        if spec.n_classes < 2 {
            return Err(LabError::InvalidArchitecture("need at least two classes".into()));
        }
        let mut params = ParameterStore::new();
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        let mut shape = spec.input_shape.clone();
        for (bi, block_spec) in spec.blocks.iter().enumerate() {
            let mut layers = Vec::with_capacity(block_spec.len());
            for (li, ls) in block_spec.iter().enumerate() {
                let layer = match *ls {
                    LayerSpec::Dense { units, bias } => {
                        let inputs: usize = shape.iter().product();
                        if shape.len() != 1 {
                            return Err(LabError::InvalidArchitecture(format!(
                                "dense layer in block {} needs flat input, got {:?}",
                                bi + 1,
                                shape
                            )));
                        }
                        let weight = params.push(bi, li, ParamRole::Weight, &[inputs, units], inputs, units);
                        let bias = bias.then(|| params.push(bi, li, ParamRole::Bias, &[units], inputs, units));
                        Layer::Dense(Dense {
                            inputs,
                            outputs: units,
                            weight,
                            bias,
                        })
                    }
                    LayerSpec::Conv2D { filters, kernel, bias } => {
                        if shape.len() != 3 {
                            return Err(LabError::InvalidArchitecture(format!(
                                "conv2d in block {} needs [c, h, w] input, got {:?}",
                                bi + 1,
                                shape
                            )));
                        }
                        if kernel % 2 == 0 {
                            return Err(LabError::InvalidArchitecture("conv kernel must be odd".into()));
                        }
                        let in_ch = shape[0];
                        let fan_in = kernel * kernel * in_ch;
                        let fan_out = kernel * kernel * filters;
                        let weight = params.push(
                            bi,
                            li,
                            ParamRole::Weight,
                            &[filters, in_ch, kernel, kernel],
                            fan_in,
                            fan_out,
                        );
                        let bias = bias.then(|| params.push(bi, li, ParamRole::Bias, &[filters], fan_in, fan_out));
                        Layer::Conv2D(Conv2D {
                            in_channels: in_ch,
                            out_channels: filters,
                            kernel,
                            weight,
                            bias,
                        })
                    }
                    LayerSpec::MaxPool2D { size } => Layer::MaxPool2D { size },
                    LayerSpec::Flatten => Layer::Flatten,
                    LayerSpec::ReLU => Layer::ReLU,
                    LayerSpec::Dropout { rate } => {
                        if !(0.0..1.0).contains(&rate) {
                            return Err(LabError::InvalidArchitecture(format!(
                                "dropout rate {rate} outside [0, 1)"
                            )));
                        }
                        Layer::Dropout { rate }
                    }
                    LayerSpec::FeatureNorm => Layer::FeatureNorm { eps: FEATURE_NORM_EPS },
                };
                shape = layer.output_shape(&shape)?;
                layers.push(layer);
            }
            blocks.push(Block { layers });
        }
        match blocks.last().and_then(|b| b.layers.last()) {
            Some(Layer::Dense(d)) if d.outputs == spec.n_classes => {}
            _ => {
                return Err(LabError::InvalidArchitecture(format!(
                    "last layer must be a dense head with {} outputs",
                    spec.n_classes
                )))
            }
        }
        let fc_start = spec.fc_start.unwrap_or(spec.k_blocks.min(blocks.len() - 1));
        if fc_start >= blocks.len() {
            return Err(LabError::InvalidArchitecture(format!(
                "fc_start {fc_start} beyond {} blocks",
                blocks.len()
            )));
        }
        params.check_tiling()?;
        let frozen = vec![false; params.segments().len()];
        let mut net = Network {
            name: spec.name.clone(),
            input_shape: spec.input_shape.clone(),
            blocks,
            k_blocks: spec.k_blocks,
            fc_start,
            n_classes: spec.n_classes,
            initializer: spec.initializer,
            params,
            init_scales: None,
            frozen,
        };
        let eta = net.draw_init(rng)?;
        net.params.set_flat(&eta)?;
        Ok(net)
    }

    /// A complete fresh initialization `eta` laid out like the flat store.
    pub fn draw_init(&self, rng: &RngStream) -> Result<Vec<f64>> {
        let mut eta = vec![0.0; self.params.dim()];
        for (id, seg) in self.params.segments().iter().enumerate() {
            if seg.role == ParamRole::Weight {
                self.initializer
                    .fill(seg.fan_in, seg.fan_out, &mut eta[seg.range()], &rng.derive(id as u64))?;
            }
        }
        Ok(eta)
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn k_blocks(&self) -> usize {
        self.k_blocks
    }

    pub fn fc_start(&self) -> usize {
        self.fc_start
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn initializer(&self) -> Initializer {
        self.initializer
    }

    pub fn init_scales(&self) -> Option<&[f64]> {
        self.init_scales.as_deref()
    }

    pub(crate) fn set_init_scales(&mut self, scales: Vec<f64>) {
        self.init_scales = Some(scales);
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    /// Freezes (or unfreezes) every segment for which `pred` holds.
    pub fn set_frozen(&mut self, pred: impl Fn(usize) -> bool) {
        for (id, f) in self.frozen.iter_mut().enumerate() {
            *f = pred(id);
        }
    }

    pub fn unfreeze_all(&mut self) {
        self.frozen.iter_mut().for_each(|f| *f = false);
    }

    /// Segment ids whose owning block index (0-based) satisfies `pred`.
    pub fn segments_where(&self, pred: impl Fn(usize) -> bool) -> Vec<usize> {
        self.params
            .segments()
            .iter()
            .enumerate()
            .filter(|(_, s)| pred(s.block))
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of [`Layer::LambdaNorm`] layers currently in the network.
    pub fn lambda_count(&self) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| &b.layers)
            .filter(|l| matches!(l, Layer::LambdaNorm { .. }))
            .count()
    }

    /// Scalar statistics of the normalization after block `k` (1-based).
    pub fn lambda_after(&self, k: usize) -> Option<(f64, f64)> {
        self.blocks.get(k.checked_sub(1)?)?.lambda()
    }

    pub(crate) fn block_mut(&mut self, k: usize) -> &mut Block {
        &mut self.blocks[k - 1]
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            return Err(LabError::InvalidArchitecture(format!(
                "{} expects [n, {:?}], got {:?}",
                self.name,
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    fn run_layers<'a>(
        &self,
        layers: impl Iterator<Item = &'a Layer>,
        mut x: Tensor,
        mode: Mode,
        rng: &mut LabRng,
    ) -> Result<Tensor> {
        for layer in layers {
            x = layer.forward(&self.params, x, mode, rng, false)?.0;
        }
        Ok(x)
    }

    /// Pre-softmax outputs.
    pub fn logits(&self, x: &Tensor, mode: Mode, rng: &mut LabRng) -> Result<Tensor> {
        self.check_input(x)?;
        self.run_layers(self.blocks.iter().flat_map(|b| &b.layers), x.clone(), mode, rng)
    }

    /// Class probabilities; each row sums to one.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut LabRng) -> Result<Tensor> {
        let mut z = self.logits(x, mode, rng)?;
        softmax_rows(&mut z);
        Ok(z)
    }

    /// Eval-mode probabilities.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x, Mode::Eval, &mut RngStream::root(0).generator())
    }

    /// Eval-mode output of block `k` (1-based), taken before any
    /// normalization layer already attached to that block.
    pub fn block_output(&self, x: &Tensor, k: usize) -> Result<Tensor> {
        if k == 0 || k > self.blocks.len() {
            return Err(LabError::Contract(format!("block {k} out of range")));
        }
        self.check_input(x)?;
        let mut rng = RngStream::root(0).generator();
        let layers = self.blocks[..k - 1]
            .iter()
            .flat_map(|b| b.layers.iter())
            .chain(self.blocks[k - 1].body());
        self.run_layers(layers, x.clone(), Mode::Eval, &mut rng)
    }

    /// Position of the classifier head: the last dense layer, which may be
    /// followed by a normalization layer.
    fn head_position(&self) -> (Vec<&Layer>, usize) {
        let all: Vec<&Layer> = self.blocks.iter().flat_map(|b| &b.layers).collect();
        let pos = all
            .iter()
            .rposition(|l| matches!(l, Layer::Dense(_)))
            .expect("validated at build time");
        (all, pos)
    }

    /// Eval-mode activations entering the classifier head.
    pub fn head_input(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut rng = RngStream::root(0).generator();
        let (all, pos) = self.head_position();
        self.run_layers(all[..pos].iter().copied(), x.clone(), Mode::Eval, &mut rng)
    }

    /// Segment id of the classifier head weight matrix.
    pub fn head_weight(&self) -> usize {
        let (all, pos) = self.head_position();
        match all[pos] {
            Layer::Dense(d) => d.weight,
            _ => unreachable!(),
        }
    }

    /// Eval-mode mean cross-entropy, without the weight penalty.
    pub fn eval_loss(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        let p = self.predict(x)?;
        let c = self.n_classes;
        let ce: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -p.data()[i * c + y].max(f64::MIN_POSITIVE).ln())
            .sum();
        Ok(ce / labels.len() as f64)
    }

    /// Mean cross-entropy plus `weight_decay * 0.5 * ||w||^2`, its gradient
    /// aligned with the flat store, and the batch probabilities.
    pub fn loss_and_grads(
        &self,
        x: &Tensor,
        labels: &[usize],
        weight_decay: f64,
        mode: Mode,
        rng: &mut LabRng,
    ) -> Result<(f64, Vec<f64>, Tensor)> {
        self.check_input(x)?;
        let n = x.rows();
        if labels.len() != n {
            return Err(LabError::Shape(format!("{} labels for {} rows", labels.len(), n)));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.n_classes) {
            return Err(LabError::Contract(format!("label {bad} outside [0, {})", self.n_classes)));
        }
        let mut caches: Vec<Cache> = Vec::new();
        let layers: Vec<&Layer> = self.blocks.iter().flat_map(|b| &b.layers).collect();
        let mut h = x.clone();
        for layer in &layers {
            let (out, cache) = layer.forward(&self.params, h, mode, rng, true)?;
            caches.push(cache);
            h = out;
        }
        let mut probs = h;
        softmax_rows(&mut probs);
        let c = self.n_classes;
        let mut ce = 0.0;
        let mut dlogits = probs.clone();
        let inv_n = 1.0 / n as f64;
        for (i, &y) in labels.iter().enumerate() {
            ce -= probs.data()[i * c + y].max(f64::MIN_POSITIVE).ln();
            dlogits.data_mut()[i * c + y] -= 1.0;
        }
        dlogits.data_mut().iter_mut().for_each(|g| *g *= inv_n);
        let w = self.params.flat();
        let penalty = if weight_decay > 0.0 {
            0.5 * weight_decay * w.iter().map(|v| v * v).sum::<f64>()
        } else {
            0.0
        };
        let loss = ce * inv_n + penalty;
        if !loss.is_finite() {
            return Err(LabError::NumericFailure(format!("loss is {loss}")));
        }
        let mut grads = if weight_decay > 0.0 {
            w.iter().map(|v| weight_decay * v).collect()
        } else {
            vec![0.0; w.len()]
        };
        let mut dy = dlogits;
        for (i, (layer, cache)) in layers.iter().zip(caches).enumerate().rev() {
            match layer.backward(&self.params, cache, dy, &mut grads, i > 0)? {
                Some(dx) => dy = dx,
                None => break,
            }
        }
        Ok((loss, grads, probs))
    }

    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        let p = self.predict(x)?;
        Ok(accuracy_of(&p, labels))
    }

    /// Frobenius norm of every segment, in segment order.
    pub fn segment_norms(&self) -> Vec<f64> {
        (0..self.params.segments().len())
            .map(|id| frobenius_norm(self.params.values(id)))
            .collect()
    }
}

pub fn softmax_rows(z: &mut Tensor) {
    let c = z.row_len();
    for row in z.data_mut().chunks_exact_mut(c) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Fraction of rows whose arg-max (lowest index on ties) equals the label.
pub fn accuracy_of(probs: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let c = probs.row_len();
    let correct = probs
        .data()
        .chunks_exact(c)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    correct as f64 / labels.len() as f64
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Gradient-check adaptor: a network, a fixed batch and a fixed dropout
/// stream so the loss is a deterministic function of the parameters.
pub struct NetworkObjective<'a> {
    pub network: &'a mut Network,
    pub x: &'a Tensor,
    pub labels: &'a [usize],
    pub weight_decay: f64,
    pub mode: Mode,
    pub dropout_stream: RngStream,
}

impl Objective for NetworkObjective<'_> {
    fn params(&self) -> &[f64] {
        self.network.params.flat()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.network.params.flat_mut()
    }

    fn loss(&mut self) -> Result<f64> {
        Ok(self.loss_and_grad()?.0)
    }

    fn loss_and_grad(&mut self) -> Result<(f64, Vec<f64>)> {
        let mut rng = self.dropout_stream.generator();
        let (l, g, _) = self
            .network
            .loss_and_grads(self.x, self.labels, self.weight_decay, self.mode, &mut rng)?;
        Ok((l, g))
    }
}
