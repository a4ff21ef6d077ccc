//! Minimal differentiable 1D-CNN: six layer kinds, exact backpropagation,
//! Adam, a deterministic training loop, nested grid search and a binary
//! checkpoint format.

use alloc::string::String;

mod checkpoint;
mod eval;
mod grid;
mod layer;
mod network;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use eval::{Averages, ClassMetrics, ClassificationReport, ConfusionMatrix};
pub use grid::{grid_search, ArchConfig, CandidateScore, GridSearchResult, HyperGrid, HyperParams};
pub use layer::{Layer, LayerSpec, Shape, Tensor};
pub(crate) use network::Aux;
pub use network::{argmax, softmax, ActivationTrace, GradientSet, Mode, Network, ParamGrad, Prediction};
pub use train::{cross_entropy, evaluate, train, Adam, AdamConfig, EpochStats, TrainConfig, TrainHistory};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("activation trace does not belong to the current network state")]
    StaleTrace,
    #[error("training diverged in epoch {epoch}")]
    DivergedTraining { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training and validation sets must be non-empty")]
    EmptyDataset,
    #[error("window has no label")]
    MissingLabel,
    #[error("network parameters are not finite")]
    NonFiniteParameters,
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u16),
    #[error("checkpoint is truncated")]
    TruncatedFile,
    #[error("checkpoint has trailing bytes")]
    TrailingBytes,
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
}
