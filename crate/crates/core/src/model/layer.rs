//! Layer kinds with their forward and backward passes.
//!
//! Activations are row-major tensors whose leading dimension is the batch:
//! `[n, features]` for dense inputs and `[n, channels, height, width]` for
//! images. The softmax output is applied by the network, not by a layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use crate::error::{LabError, Result};
use crate::numerics::{gemm, LabRng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Segment of the `[inputs, outputs]` weight matrix.
    pub weight: usize,
    pub bias: Option<usize>,
}

/// Stride-1 convolution with "same" zero padding and a square odd kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2D {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// Segment of the `[out, in, kernel, kernel]` filter bank.
    pub weight: usize,
    pub bias: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    Conv2D(Conv2D),
    MaxPool2D { size: usize },
    Flatten,
    ReLU,
    Dropout { rate: f64 },
    /// Fixed affine normalization `(x - mu) / sigma` with scalar, non-trainable
    /// statistics.
    LambdaNorm { mu: f64, sigma: f64 },
    /// Per-example standardization over all features, without affine
    /// parameters.
    FeatureNorm { eps: f64 },
}

/// What a layer keeps from its forward pass for the backward pass.
#[derive(Debug)]
pub(crate) enum Cache {
    Empty,
    Input(Tensor),
    Cols { cols: Vec<f64>, in_shape: Vec<usize> },
    Pool { argmax: Vec<usize>, in_shape: Vec<usize> },
    Relu(Tensor),
    Dropout(Vec<f64>),
    FeatureNorm { out: Tensor, inv_std: Vec<f64> },
    Reshape(Vec<usize>),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2D(_) => "conv2d",
            Layer::MaxPool2D { .. } => "max_pool2d",
            Layer::Flatten => "flatten",
            Layer::ReLU => "relu",
            Layer::Dropout { .. } => "dropout",
            Layer::LambdaNorm { .. } => "lambda_norm",
            Layer::FeatureNorm { .. } => "feature_norm",
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, Layer::Dense(_) | Layer::Conv2D(_))
    }

    /// Segment ids owned by this layer.
    pub fn segments(&self) -> Vec<usize> {
        match self {
            Layer::Dense(d) => std::iter::once(d.weight).chain(d.bias).collect(),
            Layer::Conv2D(c) => std::iter::once(c.weight).chain(c.bias).collect(),
            _ => Vec::new(),
        }
    }

    /// Output shape (excluding the batch dimension) for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => {
                let features: usize = input.iter().product();
                if input.len() != 1 || features != d.inputs {
                    return Err(LabError::InvalidArchitecture(format!(
                        "dense layer expects [{}], got {:?}",
                        d.inputs, input
                    )));
                }
                Ok(vec![d.outputs])
            }
            Layer::Conv2D(c) => {
                if input.len() != 3 || input[0] != c.in_channels {
                    return Err(LabError::InvalidArchitecture(format!(
                        "conv2d expects [{}, h, w], got {:?}",
                        c.in_channels, input
                    )));
                }
                Ok(vec![c.out_channels, input[1], input[2]])
            }
            Layer::MaxPool2D { size } => {
                if input.len() != 3 || input[1] < *size || input[2] < *size {
                    return Err(LabError::InvalidArchitecture(format!(
                        "max_pool2d({size}) cannot pool {:?}",
                        input
                    )));
                }
                Ok(vec![input[0], input[1] / size, input[2] / size])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            _ => Ok(input.to_vec()),
        }
    }

    pub(crate) fn forward(
        &self,
        params: &ParameterStore,
        x: Tensor,
        mode: Mode,
        rng: &mut LabRng,
        keep: bool,
    ) -> Result<(Tensor, Cache)> {
        match self {
            Layer::Dense(d) => dense_forward(d, params, x, keep),
            Layer::Conv2D(c) => conv_forward(c, params, x, keep),
            Layer::MaxPool2D { size } => pool_forward(*size, x, keep),
            Layer::Flatten => {
                let in_shape = x.shape().to_vec();
                let n = x.rows();
                let w = x.row_len();
                let out = x.reshape(&[n, w])?;
                Ok((out, if keep { Cache::Reshape(in_shape) } else { Cache::Empty }))
            }
            Layer::ReLU => {
                let mut x = x;
                for v in x.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                let cache = if keep { Cache::Relu(x.clone()) } else { Cache::Empty };
                Ok((x, cache))
            }
            Layer::Dropout { rate } => {
                if mode == Mode::Eval || *rate == 0.0 {
                    return Ok((x, Cache::Empty));
                }
                let keep_p = 1.0 - rate;
                let scale = 1.0 / keep_p;
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.random::<f64>() < keep_p { scale } else { 0.0 })
                    .collect();
                let mut x = x;
                for (v, m) in x.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                Ok((x, if keep { Cache::Dropout(mask) } else { Cache::Empty }))
            }
            Layer::LambdaNorm { mu, sigma } => {
                let inv = 1.0 / sigma;
                let mut x = x;
                for v in x.data_mut() {
                    *v = (*v - mu) * inv;
                }
                Ok((x, Cache::Empty))
            }
            Layer::FeatureNorm { eps } => feature_norm_forward(*eps, x, keep),
        }
    }

    /// Accumulates parameter gradients into `grads` (aligned with the flat
    /// store) and returns the input gradient when `need_dx` is set.
    pub(crate) fn backward(
        &self,
        params: &ParameterStore,
        cache: Cache,
        dy: Tensor,
        grads: &mut [f64],
        need_dx: bool,
    ) -> Result<Option<Tensor>> {
        match (self, cache) {
            (Layer::Dense(d), Cache::Input(x)) => Ok(dense_backward(d, params, &x, &dy, grads, need_dx)),
            (Layer::Conv2D(c), Cache::Cols { cols, in_shape }) => {
                Ok(conv_backward(c, params, &cols, &in_shape, &dy, grads, need_dx))
            }
            (Layer::MaxPool2D { .. }, Cache::Pool { argmax, in_shape }) => {
                let mut dx = vec![0.0; in_shape.iter().product()];
                for (g, &i) in dy.data().iter().zip(&argmax) {
                    dx[i] += g;
                }
                Ok(Some(Tensor::from_parts(in_shape, dx)))
            }
            (Layer::Flatten, Cache::Reshape(shape)) => Ok(Some(dy.reshape(&shape)?)),
            (Layer::ReLU, Cache::Relu(out)) => {
                let mut dy = dy;
                for (g, &o) in dy.data_mut().iter_mut().zip(out.data()) {
                    if o <= 0.0 {
                        *g = 0.0;
                    }
                }
                Ok(Some(dy))
            }
            (Layer::Dropout { .. }, Cache::Dropout(mask)) => {
                let mut dy = dy;
                for (g, m) in dy.data_mut().iter_mut().zip(&mask) {
                    *g *= m;
                }
                Ok(Some(dy))
            }
            (Layer::Dropout { .. }, Cache::Empty) => Ok(Some(dy)),
            (Layer::LambdaNorm { sigma, .. }, Cache::Empty) => Ok(Some(dy.scale(1.0 / sigma))),
            (Layer::FeatureNorm { .. }, Cache::FeatureNorm { out, inv_std }) => {
                let w = out.row_len();
                let mut dx = dy;
                for (i, &inv) in inv_std.iter().enumerate() {
                    let y = out.row(i);
                    let g = &mut dx.data_mut()[i * w..(i + 1) * w];
                    let mean_g = g.iter().sum::<f64>() / w as f64;
                    let mean_gy = g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / w as f64;
                    for (gj, yj) in g.iter_mut().zip(y) {
                        *gj = inv * (*gj - mean_g - yj * mean_gy);
                    }
                }
                Ok(Some(dx))
            }
            (layer, _) => Err(LabError::Contract(format!(
                "{} backward called without its forward cache",
                layer.name()
            ))),
        }
    }
}

fn dense_forward(d: &Dense, params: &ParameterStore, x: Tensor, keep: bool) -> Result<(Tensor, Cache)> {
    let n = x.rows();
    if x.row_len() != d.inputs {
        return Err(LabError::Shape(format!(
            "dense expects {} inputs, got {:?}",
            d.inputs,
            x.shape()
        )));
    }
    let mut out = vec![0.0; n * d.outputs];
    if let Some(b) = d.bias {
        let bias = params.values(b);
        for row in out.chunks_exact_mut(d.outputs) {
            row.copy_from_slice(bias);
        }
    }
    let beta = if d.bias.is_some() { 1.0 } else { 0.0 };
    gemm(n, d.inputs, d.outputs, 1.0, x.data(), false, params.values(d.weight), false, beta, &mut out);
    let cache = if keep { Cache::Input(x) } else { Cache::Empty };
    Ok((Tensor::from_parts(vec![n, d.outputs], out), cache))
}

fn dense_backward(
    d: &Dense,
    params: &ParameterStore,
    x: &Tensor,
    dy: &Tensor,
    grads: &mut [f64],
    need_dx: bool,
) -> Option<Tensor> {
    let n = x.rows();
    let w_range = params.segment(d.weight).range();
    gemm(d.inputs, n, d.outputs, 1.0, x.data(), true, dy.data(), false, 1.0, &mut grads[w_range]);
    if let Some(b) = d.bias {
        let gb = &mut grads[params.segment(b).range()];
        for row in dy.data().chunks_exact(d.outputs) {
            for (g, v) in gb.iter_mut().zip(row) {
                *g += v;
            }
        }
    }
    if !need_dx {
        return None;
    }
    let mut dx = vec![0.0; n * d.inputs];
    gemm(n, d.outputs, d.inputs, 1.0, dy.data(), false, params.values(d.weight), true, 0.0, &mut dx);
    Some(Tensor::from_parts(x.shape().to_vec(), dx))
}

/// Unfolds one `[c, h, w]` image into `[c * k * k, h * w]` patch columns.
fn im2col(img: &[f64], c: usize, h: usize, w: usize, k: usize, cols: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    for x in 0..w {
                        let sx = x as isize + kx as isize - pad;
                        dst[y * w + x] = if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                            img[(ch * h + sy as usize) * w + sx as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, img: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x as isize + kx as isize - pad;
                        if sx >= 0 && sx < w as isize {
                            img[(ch * h + sy as usize) * w + sx as usize] += src[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward(c: &Conv2D, params: &ParameterStore, x: Tensor, keep: bool) -> Result<(Tensor, Cache)> {
    let shape = x.shape().to_vec();
    if shape.len() != 4 || shape[1] != c.in_channels {
        return Err(LabError::Shape(format!(
            "conv2d expects [n, {}, h, w], got {:?}",
            c.in_channels, shape
        )));
    }
    let (n, h, w) = (shape[0], shape[2], shape[3]);
    let hw = h * w;
    let patch = c.in_channels * c.kernel * c.kernel;
    let img_len = c.in_channels * hw;
    let mut cols = vec![0.0; n * patch * hw];
    let mut out = vec![0.0; n * c.out_channels * hw];
    let kernel = params.values(c.weight);
    for i in 0..n {
        let col = &mut cols[i * patch * hw..(i + 1) * patch * hw];
        im2col(&x.data()[i * img_len..(i + 1) * img_len], c.in_channels, h, w, c.kernel, col);
        let o = &mut out[i * c.out_channels * hw..(i + 1) * c.out_channels * hw];
        if let Some(b) = c.bias {
            for (ch, &bv) in params.values(b).iter().enumerate() {
                o[ch * hw..(ch + 1) * hw].fill(bv);
            }
        }
        let beta = if c.bias.is_some() { 1.0 } else { 0.0 };
        gemm(c.out_channels, patch, hw, 1.0, kernel, false, col, false, beta, o);
    }
    let out = Tensor::from_parts(vec![n, c.out_channels, h, w], out);
    let cache = if keep {
        Cache::Cols { cols, in_shape: shape }
    } else {
        Cache::Empty
    };
    Ok((out, cache))
}

fn conv_backward(
    c: &Conv2D,
    params: &ParameterStore,
    cols: &[f64],
    in_shape: &[usize],
    dy: &Tensor,
    grads: &mut [f64],
    need_dx: bool,
) -> Option<Tensor> {
    let (n, h, w) = (in_shape[0], in_shape[2], in_shape[3]);
    let hw = h * w;
    let patch = c.in_channels * c.kernel * c.kernel;
    let w_range = params.segment(c.weight).range();
    let b_range = c.bias.map(|b| params.segment(b).range());
    let mut dcols = if need_dx { vec![0.0; patch * hw] } else { Vec::new() };
    let mut dx = if need_dx { vec![0.0; in_shape.iter().product()] } else { Vec::new() };
    let img_len = c.in_channels * hw;
    let kernel = params.values(c.weight);
    for i in 0..n {
        let g = &dy.data()[i * c.out_channels * hw..(i + 1) * c.out_channels * hw];
        let col = &cols[i * patch * hw..(i + 1) * patch * hw];
        gemm(c.out_channels, hw, patch, 1.0, g, false, col, true, 1.0, &mut grads[w_range.clone()]);
        if let Some(r) = &b_range {
            for (ch, gb) in grads[r.clone()].iter_mut().enumerate() {
                *gb += g[ch * hw..(ch + 1) * hw].iter().sum::<f64>();
            }
        }
        if need_dx {
            gemm(patch, c.out_channels, hw, 1.0, kernel, true, g, false, 0.0, &mut dcols);
            col2im(&dcols, c.in_channels, h, w, c.kernel, &mut dx[i * img_len..(i + 1) * img_len]);
        }
    }
    need_dx.then(|| Tensor::from_parts(in_shape.to_vec(), dx))
}

fn pool_forward(size: usize, x: Tensor, keep: bool) -> Result<(Tensor, Cache)> {
    let shape = x.shape().to_vec();
    if shape.len() != 4 {
        return Err(LabError::Shape(format!("max_pool2d expects 4-d input, got {:?}", shape)));
    }
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (oh, ow) = (h / size, w / size);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(if keep { n * c * oh * ow } else { 0 });
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = base + (oy * size + dy) * w + ox * size + dx;
                        if data[idx] > best {
                            best = data[idx];
                            best_i = idx;
                        }
                    }
                }
                out.push(best);
                if keep {
                    argmax.push(best_i);
                }
            }
        }
    }
    let cache = if keep {
        Cache::Pool { argmax, in_shape: shape }
    } else {
        Cache::Empty
    };
    Ok((Tensor::from_parts(vec![n, c, oh, ow], out), cache))
}

fn feature_norm_forward(eps: f64, x: Tensor, keep: bool) -> Result<(Tensor, Cache)> {
    let n = x.rows();
    let w = x.row_len();
    let mut x = x;
    let mut inv_std = Vec::with_capacity(n);
    for row in x.data_mut().chunks_exact_mut(w) {
        let mean = row.iter().sum::<f64>() / w as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
        inv_std.push(inv);
    }
    let cache = if keep {
        Cache::FeatureNorm { out: x.clone(), inv_std }
    } else {
        Cache::Empty
    };
    Ok((x, cache))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn run(layer: &Layer, x: Tensor, mode: Mode) -> Tensor {
        let store = ParameterStore::new();
        let mut rng = RngStream::root(0).generator();
        layer.forward(&store, x, mode, &mut rng, false).unwrap().0
    }

    #[test]
    fn lambda_norm_formula() {
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 3.0]).unwrap();
        let y = run(&Layer::LambdaNorm { mu: 2.0, sigma: 1.0 }, x, Mode::Eval);
        assert_eq!(y.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let x = Tensor::from_vec(&[2, 3], vec![1., -2., 3., 0.5, 0.25, 9.]).unwrap();
        let y = run(&Layer::Dropout { rate: 0.5 }, x.clone(), Mode::Eval);
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_train_uses_inverted_scaling() {
        let x = Tensor::from_vec(&[1, 1000], vec![1.0; 1000]).unwrap();
        let y = run(&Layer::Dropout { rate: 0.25 }, x, Mode::Train);
        for v in y.data() {
            assert!(*v == 0.0 || (*v - 1.0 / 0.75).abs() < 1e-15);
        }
        let kept = y.data().iter().filter(|v| **v > 0.0).count();
        assert!((650..850).contains(&kept));
    }

    #[test]
    fn max_pool_picks_window_max() {
        let x = Tensor::from_vec(&[1, 1, 2, 4], vec![1., 5., 2., 0., 3., 4., 7., 8.]).unwrap();
        let y = run(&Layer::MaxPool2D { size: 2 }, x, Mode::Eval);
        assert_eq!(y.shape(), &[1, 1, 1, 2]);
        assert_eq!(y.data(), &[5., 8.]);
    }

    #[test]
    fn feature_norm_standardizes_each_row() {
        let x = Tensor::from_vec(&[2, 4], vec![1., 2., 3., 4., -5., 0., 5., 10.]).unwrap();
        let y = run(&Layer::FeatureNorm { eps: 0.0 }, x, Mode::Eval);
        for i in 0..2 {
            let r = y.row(i);
            let m = r.iter().sum::<f64>() / 4.0;
            let v = r.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn im2col_roundtrip_counts_overlaps() {
        // col2im(im2col(ones)) counts how many patches cover each pixel.
        let (c, h, w, k) = (1, 3, 3, 3);
        let img = vec![1.0; c * h * w];
        let mut cols = vec![0.0; c * k * k * h * w];
        im2col(&img, c, h, w, k, &mut cols);
        let mut back = vec![0.0; c * h * w];
        col2im(&cols, c, h, w, k, &mut back);
        assert_eq!(back, vec![4., 6., 4., 6., 9., 6., 4., 6., 4.]);
    }

    #[test]
    fn shape_propagation() {
        let store_conv = Conv2D {
            in_channels: 3,
            out_channels: 8,
            kernel: 3,
            weight: 0,
            bias: None,
        };
        assert_eq!(Layer::Conv2D(store_conv).output_shape(&[3, 16, 16]).unwrap(), vec![8, 16, 16]);
        assert_eq!(Layer::MaxPool2D { size: 2 }.output_shape(&[8, 16, 16]).unwrap(), vec![8, 8, 8]);
        assert_eq!(Layer::Flatten.output_shape(&[8, 4, 4]).unwrap(), vec![128]);
        let d = Dense { inputs: 5, outputs: 2, weight: 0, bias: None };
        assert!(Layer::Dense(d).output_shape(&[4]).is_err());
    }
}
