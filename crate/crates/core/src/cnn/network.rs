use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerSpec, Shape, Tensor};
use super::CnnError;
use crate::math;
use crate::severity::{Severity, NUM_CLASSES};
use crate::signal::Window;

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Sequential 1D network over a single-channel input.
///
/// Parameters are held as `f64` but initialization and optimizer steps keep
/// them exactly representable in `f32`, so checkpoints round-trip bitwise.
#[derive(Debug)]
pub struct Network {
    layers: Vec<Layer>,
    mode: Mode,
    id: u64,
    version: u64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Network {
            layers: self.layers.clone(),
            mode: self.mode,
            id: next_id(),
            version: 0,
        }
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Per-layer auxiliary state recorded during the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Aux {
    None,
    /// flat input index of each pooled maximum
    PoolArgmax(Vec<usize>),
    /// per-element multiplier (0 or 1/(1-rate)); absent in eval mode
    DropMask(Option<Vec<f64>>),
}

/// Everything the backward pass and the explainers need from one forward pass.
#[derive(Clone, Debug)]
pub struct ActivationTrace {
    net_id: u64,
    version: u64,
    input: Tensor,
    outputs: Vec<Tensor>,
    pub(crate) aux: Vec<Aux>,
}

impl ActivationTrace {
    pub fn input(&self) -> &Tensor {
        &self.input
    }

    /// Output of layer `i`.
    pub fn output(&self, i: usize) -> &Tensor {
        &self.outputs[i]
    }

    /// Input of layer `i` (the previous layer's output).
    pub fn layer_input(&self, i: usize) -> &Tensor {
        if i == 0 {
            &self.input
        } else {
            &self.outputs[i - 1]
        }
    }

    pub fn logits(&self) -> &[f64] {
        self.outputs.last().map_or(&self.input.data, |t| &t.data)
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Gradients of a scalar with respect to every parameter, every layer
/// output and the input.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub params: Vec<ParamGrad>,
    /// `activations[i]` is the gradient w.r.t. the output of layer `i`;
    /// empty when only parameter gradients were requested.
    pub activations: Vec<Tensor>,
    pub input: Vec<f64>,
}

impl GradientSet {
    pub(crate) fn zeros_like(net: &Network) -> GradientSet {
        GradientSet {
            params: net
                .layers
                .iter()
                .map(|l| ParamGrad {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
            activations: Vec::new(),
            input: Vec::new(),
        }
    }

    pub(crate) fn add_params(&mut self, other: &GradientSet) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, y)| *x += y);
        }
    }

    pub(crate) fn scale_params(&mut self, s: f64) {
        for p in &mut self.params {
            p.weights.iter_mut().for_each(|x| *x *= s);
            p.biases.iter_mut().for_each(|x| *x *= s);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub logits: [f64; NUM_CLASSES],
    pub probabilities: [f64; NUM_CLASSES],
    pub predicted_class: Severity,
    pub confidence: f64,
}

impl Prediction {
    pub fn from_logits(logits: &[f64]) -> Result<Prediction, CnnError> {
        let logits: [f64; NUM_CLASSES] = logits.try_into().map_err(|_| {
            CnnError::ShapeMismatch(format!("expected {NUM_CLASSES} logits, got {}", logits.len()))
        })?;
        let p = softmax(&logits);
        let probabilities = [p[0], p[1], p[2], p[3]];
        let best = argmax(&probabilities);
        Ok(Prediction {
            logits,
            probabilities,
            predicted_class: Severity::ALL[best],
            confidence: probabilities[best],
        })
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| math::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn round_to_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl Network {
    /// Build a network with He-uniform weights and zero biases.
    pub fn new(specs: Vec<LayerSpec>, seed: u64) -> Result<Network, CnnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let mut layer = Layer::zeroed(spec)?;
            let fan_in = match layer.spec {
                LayerSpec::Conv1d {
                    in_channels,
                    kernel_size,
                    ..
                } => in_channels * kernel_size,
                LayerSpec::Dense { in_features, .. } => in_features,
                _ => 0,
            };
            if fan_in > 0 {
                let bound = math::sqrt(6.0 / fan_in as f64);
                for w in &mut layer.weights {
                    *w = round_to_f32(rng.random_range(-bound..bound));
                }
            }
            layers.push(layer);
        }
        Network::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Network, CnnError> {
        for l in &layers {
            l.spec.validate()?;
        }
        Ok(Network {
            layers,
            mode: Mode::Eval,
            id: next_id(),
            version: 0,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Number of layers carrying parameters (conv + dense).
    pub fn parametric_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.spec.has_params()).count()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn conv_layer_indices(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layers[i].spec.is_conv()).collect()
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Mutable access to layer parameters. Invalidates outstanding traces.
    pub fn layer_params_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        self.version += 1;
        let l = &mut self.layers[i];
        (&mut l.weights, &mut l.biases)
    }

    pub(crate) fn set_dropout_rate(&mut self, rate: f64) {
        for l in &mut self.layers {
            if let LayerSpec::Dropout { rate: r } = &mut l.spec {
                *r = rate;
            }
        }
    }

    /// Output shape for an input of `input_len` samples.
    pub fn output_shape(&self, input_len: usize) -> Result<Shape, CnnError> {
        let mut shape = Shape::Seq {
            channels: 1,
            len: input_len,
        };
        for l in &self.layers {
            shape = l.spec.output_shape(shape)?;
        }
        Ok(shape)
    }

    /// Forward a window and classify it. In train mode dropout masks come from
    /// a fixed seed, so repeated calls agree.
    pub fn forward(&self, window: &Window) -> Result<(Prediction, ActivationTrace), CnnError> {
        let seed = match self.mode {
            Mode::Train => Some(0),
            Mode::Eval => None,
        };
        let trace = self.forward_signal(window.values(), seed)?;
        Ok((Prediction::from_logits(trace.logits())?, trace))
    }

    /// Eval-mode classification of a raw signal.
    pub fn predict(&self, signal: &[f64]) -> Result<Prediction, CnnError> {
        let trace = self.forward_signal(signal, None)?;
        Prediction::from_logits(trace.logits())
    }

    /// Forward pass recording every layer output. `dropout_seed = None`
    /// means eval semantics (dropout is the identity).
    pub fn forward_signal(&self, signal: &[f64], dropout_seed: Option<u64>) -> Result<ActivationTrace, CnnError> {
        let input = Tensor {
            shape: Shape::Seq {
                channels: 1,
                len: signal.len(),
            },
            data: signal.to_vec(),
        };
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        let mut aux = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = outputs.last().unwrap_or(&input);
            let out_shape = layer.spec.output_shape(x.shape)?;
            let (y, a) = forward_layer(layer, x, out_shape, dropout_seed.map(|s| mix_seed(s, i as u64)));
            outputs.push(y);
            aux.push(a);
        }
        Ok(ActivationTrace {
            net_id: self.id,
            version: self.version,
            input,
            outputs,
            aux,
        })
    }

    fn check_trace(&self, trace: &ActivationTrace) -> Result<(), CnnError> {
        if trace.net_id != self.id || trace.version != self.version || trace.outputs.len() != self.layers.len() {
            return Err(CnnError::StaleTrace);
        }
        Ok(())
    }

    /// Gradients of the `target` logit.
    pub fn backward(&self, trace: &ActivationTrace, target: Severity) -> Result<GradientSet, CnnError> {
        let n = trace.logits().len();
        if target.index() >= n {
            return Err(CnnError::ShapeMismatch(format!("no logit for class {target}")));
        }
        let mut upstream = vec![0.0; n];
        upstream[target.index()] = 1.0;
        self.backward_from(trace, &upstream)
    }

    /// Backpropagate an arbitrary upstream gradient on the network output.
    pub fn backward_from(&self, trace: &ActivationTrace, upstream: &[f64]) -> Result<GradientSet, CnnError> {
        self.backprop(trace, upstream, true)
    }

    pub(crate) fn backprop(
        &self,
        trace: &ActivationTrace,
        upstream: &[f64],
        keep_activations: bool,
    ) -> Result<GradientSet, CnnError> {
        self.check_trace(trace)?;
        if upstream.len() != trace.logits().len() {
            return Err(CnnError::ShapeMismatch(format!(
                "upstream gradient has {} entries, output has {}",
                upstream.len(),
                trace.logits().len()
            )));
        }
        let n = self.layers.len();
        let mut grads = GradientSet::zeros_like(self);
        let mut act_grads: Vec<Tensor> = Vec::new();
        let mut g = Tensor {
            shape: trace.outputs.last().map_or(trace.input.shape, |t| t.shape),
            data: upstream.to_vec(),
        };
        for i in (0..n).rev() {
            let x = trace.layer_input(i);
            let dx = backward_layer(&self.layers[i], x, &trace.outputs[i], &trace.aux[i], &g, &mut grads.params[i]);
            if keep_activations {
                act_grads.push(g);
            }
            g = dx;
        }
        act_grads.reverse();
        grads.activations = act_grads;
        grads.input = g.data;
        Ok(grads)
    }

    pub(crate) fn visit_params_mut(&mut self, mut f: impl FnMut(usize, &mut [f64], &mut [f64])) {
        self.version += 1;
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(i, &mut l.weights, &mut l.biases);
        }
    }
}

fn mix_seed(seed: u64, layer: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ layer.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn forward_layer(layer: &Layer, x: &Tensor, out_shape: Shape, dropout_seed: Option<u64>) -> (Tensor, Aux) {
    let mut y = Tensor::zeros(out_shape);
    match layer.spec {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel_size: k,
            stride,
            padding,
        } => {
            let len = match x.shape {
                Shape::Seq { len, .. } => len,
                Shape::Flat(_) => unreachable!(),
            };
            let out_len = y.data.len() / out_channels;
            for o in 0..out_channels {
                let bias = layer.biases[o];
                let row = &mut y.data[o * out_len..(o + 1) * out_len];
                for (t, out) in row.iter_mut().enumerate() {
                    let base = (t * stride) as isize - padding as isize;
                    let k_lo = (-base).max(0) as usize;
                    let k_hi = ((len as isize - base).min(k as isize)).max(0) as usize;
                    let mut acc = bias;
                    for c in 0..in_channels {
                        let w = &layer.weights[(o * in_channels + c) * k..(o * in_channels + c + 1) * k];
                        let xs = &x.data[c * len..(c + 1) * len];
                        for kk in k_lo..k_hi {
                            acc += w[kk] * xs[(base + kk as isize) as usize];
                        }
                    }
                    *out = acc;
                }
            }
            (y, Aux::None)
        }
        LayerSpec::Relu => {
            for (o, &v) in y.data.iter_mut().zip(&x.data) {
                *o = if v > 0.0 { v } else { 0.0 };
            }
            (y, Aux::None)
        }
        LayerSpec::MaxPool1d { pool_size } => {
            let (channels, len) = match x.shape {
                Shape::Seq { channels, len } => (channels, len),
                Shape::Flat(_) => unreachable!(),
            };
            let out_len = len / pool_size;
            let mut argmax = vec![0usize; channels * out_len];
            for c in 0..channels {
                for t in 0..out_len {
                    let start = c * len + t * pool_size;
                    let mut best = start;
                    for j in start + 1..start + pool_size {
                        if x.data[j] > x.data[best] {
                            best = j;
                        }
                    }
                    y.data[c * out_len + t] = x.data[best];
                    argmax[c * out_len + t] = best;
                }
            }
            (y, Aux::PoolArgmax(argmax))
        }
        LayerSpec::Flatten => {
            y.data.copy_from_slice(&x.data);
            (y, Aux::None)
        }
        LayerSpec::Dense {
            in_features,
            out_features,
        } => {
            for o in 0..out_features {
                let w = &layer.weights[o * in_features..(o + 1) * in_features];
                let mut acc = layer.biases[o];
                for (wi, xi) in w.iter().zip(&x.data) {
                    acc += wi * xi;
                }
                y.data[o] = acc;
            }
            (y, Aux::None)
        }
        LayerSpec::Dropout { rate } => match dropout_seed {
            Some(seed) if rate > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.data.len())
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                for ((o, &v), &m) in y.data.iter_mut().zip(&x.data).zip(&mask) {
                    *o = v * m;
                }
                (y, Aux::DropMask(Some(mask)))
            }
            _ => {
                y.data.copy_from_slice(&x.data);
                (y, Aux::DropMask(None))
            }
        },
    }
}

/// Returns the gradient w.r.t. the layer input; accumulates parameter grads.
fn backward_layer(layer: &Layer, x: &Tensor, y: &Tensor, aux: &Aux, dy: &Tensor, pg: &mut ParamGrad) -> Tensor {
    let mut dx = Tensor::zeros(x.shape);
    match layer.spec {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel_size: k,
            stride,
            padding,
        } => {
            let len = match x.shape {
                Shape::Seq { len, .. } => len,
                Shape::Flat(_) => unreachable!(),
            };
            let out_len = y.data.len() / out_channels;
            for o in 0..out_channels {
                for t in 0..out_len {
                    let g = dy.data[o * out_len + t];
                    if g == 0.0 {
                        continue;
                    }
                    pg.biases[o] += g;
                    let base = (t * stride) as isize - padding as isize;
                    let k_lo = (-base).max(0) as usize;
                    let k_hi = ((len as isize - base).min(k as isize)).max(0) as usize;
                    for c in 0..in_channels {
                        let woff = (o * in_channels + c) * k;
                        let xoff = c * len;
                        for kk in k_lo..k_hi {
                            let xi = xoff + (base + kk as isize) as usize;
                            pg.weights[woff + kk] += g * x.data[xi];
                            dx.data[xi] += g * layer.weights[woff + kk];
                        }
                    }
                }
            }
        }
        LayerSpec::Relu => {
            for ((d, &g), &v) in dx.data.iter_mut().zip(&dy.data).zip(&x.data) {
                *d = if v > 0.0 { g } else { 0.0 };
            }
        }
        LayerSpec::MaxPool1d { .. } => {
            if let Aux::PoolArgmax(idx) = aux {
                for (&j, &g) in idx.iter().zip(&dy.data) {
                    dx.data[j] += g;
                }
            }
        }
        LayerSpec::Flatten => dx.data.copy_from_slice(&dy.data),
        LayerSpec::Dense {
            in_features,
            out_features,
        } => {
            for o in 0..out_features {
                let g = dy.data[o];
                if g == 0.0 {
                    continue;
                }
                pg.biases[o] += g;
                let w = &layer.weights[o * in_features..(o + 1) * in_features];
                let gw = &mut pg.weights[o * in_features..(o + 1) * in_features];
                for j in 0..in_features {
                    gw[j] += g * x.data[j];
                    dx.data[j] += g * w[j];
                }
            }
        }
        LayerSpec::Dropout { .. } => match aux {
            Aux::DropMask(Some(mask)) => {
                for ((d, &g), &m) in dx.data.iter_mut().zip(&dy.data).zip(mask) {
                    *d = g * m;
                }
            }
            _ => dx.data.copy_from_slice(&dy.data),
        },
    }
    dx
}
