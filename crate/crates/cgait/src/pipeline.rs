//! Prediction, explanation and discrepancy for one window, shared by the
//! CLI and the service.

use std::path::Path;

use cgait_core::adjudicator::PromptContext;
use cgait_core::cnn::{load_checkpoint, save_checkpoint, CnnError, Network, Prediction};
use cgait_core::explain::{explanation_pair, ExplainError, ExplanationMap, GradCamOptions};
use cgait_core::signal::{gait_metrics_from_signal, ContactConfig, GaitMetrics, Window, SAMPLE_RATE_HZ};
use cgait_core::xmed::{compute_discrepancy, DiscrepancyReport, XmedConfig, XmedError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Xmed(#[from] XmedError),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub prediction: Prediction,
    pub gradcam: ExplanationMap,
    pub lrp: ExplanationMap,
    pub discrepancy: DiscrepancyReport,
}

/// Classify `window` and explain the predicted class with both methods.
pub fn analyze(net: &Network, window: &Window, xmed: &XmedConfig) -> Result<Analysis, PipelineError> {
    let prediction = net.predict(window.values())?;
    let (gradcam, lrp) = explanation_pair(net, window, prediction.predicted_class, &GradCamOptions::default())?;
    let discrepancy = compute_discrepancy(&gradcam, &lrp, xmed)?;
    Ok(Analysis {
        prediction,
        gradcam,
        lrp,
        discrepancy,
    })
}

/// Gait metrics of the window itself, or of `fallback` (typically the whole
/// recording) when the window holds fewer than two heel strikes.
pub fn window_gait_metrics(window: &Window, fallback: Option<&[f64]>) -> Option<GaitMetrics> {
    let cfg = ContactConfig::default();
    gait_metrics_from_signal(window.values(), SAMPLE_RATE_HZ, &cfg)
        .ok()
        .or_else(|| fallback.and_then(|f| gait_metrics_from_signal(f, SAMPLE_RATE_HZ, &cfg).ok()))
}

/// Placeholder metrics when no stride can be detected at all.
pub const NO_STRIDES: GaitMetrics = GaitMetrics {
    mean_stride_time: 0.0,
    stance_percentage: 0.0,
    swing_percentage: 100.0,
};

pub fn prompt_context(a: &Analysis, metrics: GaitMetrics) -> PromptContext {
    PromptContext {
        predicted_class: a.prediction.predicted_class,
        confidence: a.prediction.confidence,
        gait_metrics: metrics,
        discrepancy_percentage: a.discrepancy.discrepancy_percentage,
        regions: a.discrepancy.regions.clone(),
    }
}

pub fn read_model(path: &Path) -> Result<Network, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Io(path.display().to_string(), e))?;
    Ok(load_checkpoint(&bytes)?)
}

/// Write the checkpoint and return its SHA-256 digest.
pub fn write_model(net: &Network, path: &Path) -> Result<String, PipelineError> {
    let bytes = save_checkpoint(net)?;
    std::fs::write(path, &bytes).map_err(|e| PipelineError::Io(path.display().to_string(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
