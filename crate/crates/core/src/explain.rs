//! Attribution maps: Grad-CAM over a conv layer and epsilon-rule LRP down to
//! the input. Both run with eval semantics (dropout off) whatever the mode of
//! the network, and both are normalized to `[0, 1]` at input resolution.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cnn::{ActivationTrace, Aux, CnnError, LayerSpec, Network, Shape};
use crate::math::min_max_normalize;
use crate::severity::Severity;
use crate::signal::Window;

pub const LRP_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    GradCam,
    Lrp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMap {
    pub method: Method,
    pub values: Vec<f64>,
    pub target_class: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_layer: Option<usize>,
}

impl ExplanationMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `index,value` lines with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 16);
        s.push_str("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{i},{v}");
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExplainError {
    #[error("layer {0} is not a convolution layer")]
    NotAConvLayer(usize),
    #[error("network has no convolution layer")]
    NoConvLayer,
    #[error(transparent)]
    Cnn(#[from] CnnError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsample {
    #[default]
    Linear,
    Nearest,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradCamOptions {
    /// Conv layer index; the last conv layer when `None`.
    pub layer: Option<usize>,
    pub upsample: Upsample,
}

/// Resize `src` to `n` samples. Linear mode aligns sample centres; nearest
/// mode maps each output sample to the source cell that covers it.
pub fn upsample(src: &[f64], n: usize, mode: Upsample) -> Vec<f64> {
    let l = src.len();
    if l == 0 {
        return vec![0.0; n];
    }
    if l == n {
        return src.to_vec();
    }
    (0..n)
        .map(|i| match mode {
            Upsample::Nearest => src[((i * l) / n).min(l - 1)],
            Upsample::Linear => {
                let pos = ((i as f64 + 0.5) * l as f64 / n as f64 - 0.5).clamp(0.0, (l - 1) as f64);
                let lo = pos as usize;
                let hi = (lo + 1).min(l - 1);
                let frac = pos - lo as f64;
                src[lo] * (1.0 - frac) + src[hi] * frac
            }
        })
        .collect()
}

fn resolve_layer(net: &Network, layer: Option<usize>) -> Result<usize, ExplainError> {
    match layer {
        Some(i) => match net.layers().get(i) {
            Some(l) if l.spec().is_conv() => Ok(i),
            _ => Err(ExplainError::NotAConvLayer(i)),
        },
        None => net.conv_layer_indices().last().copied().ok_or(ExplainError::NoConvLayer),
    }
}

/// Index of the tensor Grad-CAM reads: the ReLU right after the conv layer
/// when there is one, else the conv output itself.
fn feature_index(net: &Network, conv: usize) -> usize {
    match net.layers().get(conv + 1) {
        Some(l) if matches!(l.spec(), LayerSpec::Relu) => conv + 1,
        _ => conv,
    }
}

fn target_check(trace: &ActivationTrace, target: Severity) -> Result<(), ExplainError> {
    if target.index() >= trace.logits().len() {
        return Err(CnnError::ShapeMismatch(format!("no logit for class {target}")).into());
    }
    Ok(())
}

fn one_hot(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

/// Grad-CAM at feature-map resolution, before upsampling and normalization,
/// for an arbitrary gradient on the network output.
pub fn grad_cam_raw(
    net: &Network,
    trace: &ActivationTrace,
    upstream: &[f64],
    conv_layer: Option<usize>,
) -> Result<Vec<f64>, ExplainError> {
    let conv = resolve_layer(net, conv_layer)?;
    let fi = feature_index(net, conv);
    let grads = net.backward_from(trace, upstream)?;
    let act = trace.output(fi);
    let grad = &grads.activations[fi];
    let (channels, len) = match act.shape {
        Shape::Seq { channels, len } => (channels, len),
        Shape::Flat(_) => return Err(ExplainError::NotAConvLayer(conv)),
    };
    let mut cam = vec![0.0; len];
    for c in 0..channels {
        let g = &grad.data[c * len..(c + 1) * len];
        let weight = if len == 0 { 0.0 } else { g.iter().sum::<f64>() / len as f64 };
        if weight == 0.0 {
            continue;
        }
        for (m, a) in cam.iter_mut().zip(&act.data[c * len..(c + 1) * len]) {
            *m += weight * a;
        }
    }
    for m in &mut cam {
        if *m < 0.0 {
            *m = 0.0;
        }
    }
    Ok(cam)
}

fn grad_cam_from_trace(
    net: &Network,
    trace: &ActivationTrace,
    target: Severity,
    opts: &GradCamOptions,
) -> Result<ExplanationMap, ExplainError> {
    target_check(trace, target)?;
    let conv = resolve_layer(net, opts.layer)?;
    let raw = grad_cam_raw(net, trace, &one_hot(trace.logits().len(), target.index()), Some(conv))?;
    let mut values = upsample(&raw, trace.input().data.len(), opts.upsample);
    min_max_normalize(&mut values);
    Ok(ExplanationMap {
        method: Method::GradCam,
        values,
        target_class: target,
        source_layer: Some(conv),
    })
}

pub fn grad_cam(
    net: &Network,
    window: &Window,
    target: Severity,
    conv_layer: Option<usize>,
) -> Result<ExplanationMap, ExplainError> {
    grad_cam_signal(
        net,
        window.values(),
        target,
        &GradCamOptions {
            layer: conv_layer,
            ..Default::default()
        },
    )
}

pub fn grad_cam_signal(
    net: &Network,
    signal: &[f64],
    target: Severity,
    opts: &GradCamOptions,
) -> Result<ExplanationMap, ExplainError> {
    let trace = net.forward_signal(signal, None)?;
    grad_cam_from_trace(net, &trace, target, opts)
}

fn stabilize(z: f64) -> f64 {
    if z >= 0.0 {
        z + LRP_EPSILON
    } else {
        z - LRP_EPSILON
    }
}

/// Signed input relevance of the `target` logit under the epsilon rule.
pub fn lrp_relevance(net: &Network, trace: &ActivationTrace, target: Severity) -> Result<Vec<f64>, ExplainError> {
    target_check(trace, target)?;
    if trace.len() != net.layers().len() {
        return Err(CnnError::StaleTrace.into());
    }
    let logits = trace.logits();
    let mut r = vec![0.0; logits.len()];
    r[target.index()] = logits[target.index()];
    for i in (0..net.layers().len()).rev() {
        let layer = &net.layers()[i];
        let x = trace.layer_input(i);
        let z = trace.output(i);
        let mut below = vec![0.0; x.data.len()];
        match *layer.spec() {
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                for o in 0..out_features {
                    if r[o] == 0.0 {
                        continue;
                    }
                    let s = r[o] / stabilize(z.data[o]);
                    let w = &layer.weights()[o * in_features..(o + 1) * in_features];
                    for ((b, &wi), &xi) in below.iter_mut().zip(w).zip(&x.data) {
                        *b += xi * wi * s;
                    }
                }
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size: k,
                stride,
                padding,
            } => {
                let len = match x.shape {
                    Shape::Seq { len, .. } => len,
                    Shape::Flat(_) => return Err(CnnError::ShapeMismatch("conv over flat input".into()).into()),
                };
                let out_len = z.data.len() / out_channels;
                for o in 0..out_channels {
                    for t in 0..out_len {
                        let ro = r[o * out_len + t];
                        if ro == 0.0 {
                            continue;
                        }
                        let s = ro / stabilize(z.data[o * out_len + t]);
                        let base = (t * stride) as isize - padding as isize;
                        let k_lo = (-base).max(0) as usize;
                        let k_hi = ((len as isize - base).min(k as isize)).max(0) as usize;
                        for c in 0..in_channels {
                            let woff = (o * in_channels + c) * k;
                            for kk in k_lo..k_hi {
                                let xi = c * len + (base + kk as isize) as usize;
                                below[xi] += x.data[xi] * layer.weights()[woff + kk] * s;
                            }
                        }
                    }
                }
            }
            LayerSpec::MaxPool1d { .. } => {
                let argmax = match &trace.aux[i] {
                    Aux::PoolArgmax(a) => a,
                    _ => return Err(CnnError::StaleTrace.into()),
                };
                for (&src, &ro) in argmax.iter().zip(&r) {
                    below[src] += ro;
                }
            }
            LayerSpec::Relu | LayerSpec::Flatten | LayerSpec::Dropout { .. } => {
                if let Aux::DropMask(Some(_)) = trace.aux[i] {
                    return Err(CnnError::InvalidConfig("relevance needs an eval-mode trace".into()).into());
                }
                below.copy_from_slice(&r);
            }
        }
        r = below;
    }
    Ok(r)
}

fn lrp_from_trace(net: &Network, trace: &ActivationTrace, target: Severity) -> Result<ExplanationMap, ExplainError> {
    let mut values: Vec<f64> = lrp_relevance(net, trace, target)?.into_iter().map(f64::abs).collect();
    min_max_normalize(&mut values);
    Ok(ExplanationMap {
        method: Method::Lrp,
        values,
        target_class: target,
        source_layer: None,
    })
}

pub fn lrp(net: &Network, window: &Window, target: Severity) -> Result<ExplanationMap, ExplainError> {
    lrp_signal(net, window.values(), target)
}

pub fn lrp_signal(net: &Network, signal: &[f64], target: Severity) -> Result<ExplanationMap, ExplainError> {
    let trace = net.forward_signal(signal, None)?;
    lrp_from_trace(net, &trace, target)
}

/// Grad-CAM (last conv layer unless `opts.layer` says otherwise) and LRP from
/// one shared eval-mode forward pass.
pub fn explanation_pair(
    net: &Network,
    window: &Window,
    target: Severity,
    opts: &GradCamOptions,
) -> Result<(ExplanationMap, ExplanationMap), ExplainError> {
    let trace = net.forward_signal(window.values(), None)?;
    Ok((
        grad_cam_from_trace(net, &trace, target, opts)?,
        lrp_from_trace(net, &trace, target)?,
    ))
}
