//! Core engine for contestable Parkinson's gait interpretation.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (with `alloc`). File IO, the HTTP service and the
//! command line live in the companion `cgait` crate.
//!
//! Module map:
//! - [`signal`]: vGRF recordings, window segmentation, gait events, dataset splits
//! - [`fixture`]: binary window corpus codec
//! - [`cnn`]: the 1D-CNN engine (layers, exact backprop, Adam, training, grid search, checkpoints)
//! - [`explain`]: Grad-CAM and epsilon-rule LRP attribution maps
//! - [`xmed`]: cross-modal explanation discrepancy reports
//! - [`adjudicator`]: prompt rendering, decision parsing, case lifecycle, audit chain
//! - [`metrics`]: readability, clinical grounding, self-correction accuracy

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adjudicator;
pub mod cnn;
pub mod explain;
pub mod fixture;
pub mod metrics;
pub mod severity;
pub mod signal;
pub mod xmed;

mod math;

pub use severity::Severity;
