use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::ConfusionMatrix;
use super::layer::LayerSpec;
use super::network::{argmax, round_to_f32, softmax, GradientSet, Mode, Network};
use super::CnnError;
use crate::math;
use crate::severity::Severity;
use crate::signal::Window;

/// Samples per parallel work unit. Fixed so gradient summation order, and
/// therefore the trained parameters, do not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay of weights (not biases) per step, scaled by the
    /// learning rate. Zero is plain Adam.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Early-stopping patience on validation F1; `None` trains all epochs.
    pub patience: Option<usize>,
    /// Train against inputs standardized with the training-set mean and
    /// standard deviation, reading the initial parameters as acting on that
    /// scale, then fold both statistics into the first parametric layer.
    /// Raw forces are large and all positive, which otherwise pushes whole
    /// first-layer channels into dead ReLUs. The returned network takes raw
    /// input; it differs from the one trained only where zero padding meets
    /// the first conv layer. Meant for fresh initializations.
    pub standardize_input: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            dropout_rate: 0.5,
            epochs: 60,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
            patience: Some(10),
            standardize_input: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), CnnError> {
        use alloc::string::ToString;
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(CnnError::InvalidConfig("learning_rate must be finite and non-negative".to_string()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CnnError::InvalidConfig("epochs and batch_size must be at least 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CnnError::InvalidConfig("dropout_rate must be in [0, 1)".to_string()));
        }
        let wd = self.adam.weight_decay;
        if !(wd >= 0.0 && wd.is_finite() && self.learning_rate * wd < 1.0) {
            return Err(CnnError::InvalidConfig(
                "adam.weight_decay must be non-negative with learning_rate * weight_decay < 1".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Running mean over the epoch's train-mode forward passes.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Cross-entropy of softmax(logits) against `target`, with its gradient.
pub fn cross_entropy(logits: &[f64], target: Severity) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + math::ln(logits.iter().map(|&z| math::exp(z - max)).sum::<f64>());
    let loss = lse - logits[target.index()];
    let mut grad = softmax(logits);
    grad[target.index()] -= 1.0;
    (loss, grad)
}

pub struct Adam {
    cfg: AdamConfig,
    lr: f64,
    step: i32,
    m: Vec<(Vec<f64>, Vec<f64>)>,
    v: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(net: &Network, lr: f64, cfg: AdamConfig) -> Adam {
        let zeros: Vec<(Vec<f64>, Vec<f64>)> = net
            .layers()
            .iter()
            .map(|l| (vec![0.0; l.weights().len()], vec![0.0; l.biases().len()]))
            .collect();
        Adam {
            cfg,
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update; parameters are rounded to f32 precision afterwards.
    pub fn step(&mut self, net: &mut Network, grads: &GradientSet) {
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.cfg;
        let bc1 = 1.0 - math::powi(beta1, self.step);
        let bc2 = 1.0 - math::powi(beta2, self.step);
        let lr = self.lr;
        let (ms, vs) = (&mut self.m, &mut self.v);
        net.visit_params_mut(|i, w, b| {
            let g = &grads.params[i];
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], decay: f64| {
                for j in 0..p.len() {
                    m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                    v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                    let mhat = m[j] / bc1;
                    let vhat = v[j] / bc2;
                    p[j] = round_to_f32(p[j] - lr * (mhat / (math::sqrt(vhat) + epsilon) + decay * p[j]));
                }
            };
            update(w, &g.weights, &mut ms[i].0, &mut vs[i].0, weight_decay);
            update(b, &g.biases, &mut ms[i].1, &mut vs[i].1, 0.0);
        });
    }
}

struct SampleResult {
    loss: f64,
    correct: bool,
    grads: GradientSet,
}

fn sample_grads(net: &Network, w: &Window, dropout_seed: u64) -> Result<SampleResult, CnnError> {
    let label = w.label.ok_or(CnnError::MissingLabel)?;
    let trace = net.forward_signal(w.values(), Some(dropout_seed))?;
    let (loss, dlogits) = cross_entropy(trace.logits(), label);
    let correct = argmax(trace.logits()) == label.index();
    let grads = net.backprop(&trace, &dlogits, false)?;
    Ok(SampleResult { loss, correct, grads })
}

/// Summed gradients, loss and correct count over a chunk of samples.
fn chunk_grads(net: &Network, chunk: &[(&Window, u64)]) -> Result<(GradientSet, f64, usize), CnnError> {
    let mut total = GradientSet::zeros_like(net);
    let mut loss = 0.0;
    let mut correct = 0;
    for &(w, seed) in chunk {
        let r = sample_grads(net, w, seed)?;
        total.add_params(&r.grads);
        loss += r.loss;
        correct += r.correct as usize;
    }
    Ok((total, loss, correct))
}

fn batch_grads(net: &Network, batch: &[(&Window, u64)]) -> Result<(GradientSet, f64, usize), CnnError> {
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(GradientSet, f64, usize), CnnError>> = {
        use rayon::prelude::*;
        batch.par_chunks(GRAD_CHUNK).map(|c| chunk_grads(net, c)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(GradientSet, f64, usize), CnnError>> =
        batch.chunks(GRAD_CHUNK).map(|c| chunk_grads(net, c)).collect();

    let mut total = GradientSet::zeros_like(net);
    let (mut loss, mut correct) = (0.0, 0);
    for p in parts {
        let (g, l, c) = p?;
        total.add_params(&g);
        loss += l;
        correct += c;
    }
    Ok((total, loss, correct))
}

/// Eval-mode mean cross-entropy and confusion matrix over labelled windows.
pub fn evaluate(net: &Network, windows: &[Window]) -> Result<(f64, ConfusionMatrix), CnnError> {
    let refs: Vec<&Window> = windows.iter().collect();
    evaluate_refs(net, &refs)
}

pub(crate) fn evaluate_refs(net: &Network, windows: &[&Window]) -> Result<(f64, ConfusionMatrix), CnnError> {
    let eval_one = |w: &&Window| -> Result<(f64, Severity, Severity), CnnError> {
        let label = w.label.ok_or(CnnError::MissingLabel)?;
        let trace = net.forward_signal(w.values(), None)?;
        let (loss, _) = cross_entropy(trace.logits(), label);
        Ok((loss, label, Severity::ALL[argmax(trace.logits())]))
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Result<(f64, Severity, Severity), CnnError>> = {
        use rayon::prelude::*;
        windows.par_iter().map(eval_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Result<(f64, Severity, Severity), CnnError>> = windows.iter().map(eval_one).collect();

    let mut loss = 0.0;
    let mut pairs = Vec::with_capacity(rows.len());
    for r in rows {
        let (l, t, p) = r?;
        loss += l;
        pairs.push((t, p));
    }
    let n = windows.len().max(1) as f64;
    Ok((loss / n, ConfusionMatrix::from_pairs(pairs)))
}

/// Mini-batch Adam training on cross-entropy. Deterministic for a fixed
/// seed. With early stopping enabled the parameters of the best validation
/// F1 epoch are restored.
pub fn train(
    net: Network,
    train_set: &[Window],
    val_set: &[Window],
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory), CnnError> {
    let tr: Vec<&Window> = train_set.iter().collect();
    let va: Vec<&Window> = val_set.iter().collect();
    train_refs(net, &tr, &va, cfg)
}

/// Mean and standard deviation of every training sample value.
#[derive(Clone, Copy, Debug, PartialEq)]
struct InputNorm {
    mean: f64,
    std: f64,
    layer: usize,
}

impl InputNorm {
    /// `None` unless the layers before the first parametric one all commute
    /// with a positive affine map of the input (pooling, flatten).
    fn fit(net: &Network, windows: &[&Window]) -> Option<InputNorm> {
        let layer = net.layers().iter().position(|l| l.spec.has_params())?;
        if !net.layers()[..layer]
            .iter()
            .all(|l| matches!(l.spec, LayerSpec::MaxPool1d { .. } | LayerSpec::Flatten))
        {
            return None;
        }
        let n: usize = windows.iter().map(|w| w.values().len()).sum();
        if n == 0 {
            return None;
        }
        let mean = windows.iter().flat_map(|w| w.values()).sum::<f64>() / n as f64;
        let var = windows.iter().flat_map(|w| w.values()).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = math::sqrt(var);
        let std = if std > 1e-12 { std } else { 1.0 };
        Some(InputNorm { mean, std, layer })
    }

    fn apply(&self, w: &Window) -> Result<Window, CnnError> {
        let values = w.values().iter().map(|v| (v - self.mean) / self.std).collect();
        Window::new(w.source_id.clone(), w.start_frame, values, w.label)
            .map_err(|_| CnnError::InvalidConfig("standardized input is not finite".into()))
    }

    /// Turn a layer acting on `(x - mean) / std` into one acting on `x`.
    fn fold(&self, net: &mut Network) {
        let (w, b) = net.layer_params_mut(self.layer);
        let row = w.len() / b.len();
        for v in w.iter_mut() {
            *v = round_to_f32(*v / self.std);
        }
        for (o, bias) in b.iter_mut().enumerate() {
            let sum: f64 = w[o * row..(o + 1) * row].iter().sum();
            *bias = round_to_f32(*bias - self.mean * sum);
        }
    }
}

pub(crate) fn train_refs(
    net: Network,
    train_set: &[&Window],
    val_set: &[&Window],
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory), CnnError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(CnnError::EmptyDataset);
    }
    if train_set.iter().chain(val_set).any(|w| w.label.is_none()) {
        return Err(CnnError::MissingLabel);
    }
    let norm = if cfg.standardize_input {
        InputNorm::fit(&net, train_set)
    } else {
        None
    };
    let Some(norm) = norm else {
        return train_loop(net, train_set, val_set, cfg);
    };
    let tr = train_set.iter().map(|w| norm.apply(w)).collect::<Result<Vec<_>, _>>()?;
    let va = val_set.iter().map(|w| norm.apply(w)).collect::<Result<Vec<_>, _>>()?;
    let tr: Vec<&Window> = tr.iter().collect();
    let va: Vec<&Window> = va.iter().collect();
    let (mut net, history) = train_loop(net, &tr, &va, cfg)?;
    norm.fold(&mut net);
    if !net.params_finite() {
        return Err(CnnError::NonFiniteParameters);
    }
    Ok((net, history))
}

fn train_loop(
    mut net: Network,
    train_set: &[&Window],
    val_set: &[&Window],
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory), CnnError> {
    net.set_dropout_rate(cfg.dropout_rate);
    net.set_mode(Mode::Train);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&net, cfg.learning_rate, cfg.adam);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Network)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch_idx in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Window, u64)> = batch_idx.iter().map(|&i| (train_set[i], rng.next_u64())).collect();
            let (mut grads, loss, c) = batch_grads(&net, &batch)?;
            if !loss.is_finite() {
                return Err(CnnError::DivergedTraining { epoch });
            }
            grads.scale_params(1.0 / batch.len() as f64);
            adam.step(&mut net, &grads);
            if !net.params_finite() {
                return Err(CnnError::DivergedTraining { epoch });
            }
            loss_sum += loss;
            correct += c;
        }
        let (val_loss, confusion) = evaluate_refs(&net, val_set)?;
        if !val_loss.is_finite() {
            return Err(CnnError::DivergedTraining { epoch });
        }
        let val_f1 = confusion.report().weighted_avg.f1;
        history.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_loss,
            val_accuracy: confusion.accuracy(),
            val_f1,
        });
        if let Some(patience) = cfg.patience {
            if best.as_ref().is_none_or(|(f, _)| val_f1 > *f) {
                best = Some((val_f1, net.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    history.stopped_early = true;
                    break;
                }
            }
        } else {
            history.best_epoch = epoch;
        }
    }
    if let Some((_, best_net)) = best {
        net = best_net;
    }
    net.set_mode(Mode::Eval);
    Ok((net, history))
}
