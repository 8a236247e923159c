//! Privacy-preserving tabular dataset synthesis.
//!
//! The pipeline trains a classifier under (ε, δ)-differential privacy with
//! DP-SGD, shuffles each private attribute column independently, relabels the
//! shuffled rows with the DP model, and fuses attributes and labels into a
//! synthetic dataset. A benchmark harness trains downstream models on the
//! synthetic data and scores them on the real held-out test split.

pub mod accountant;
pub mod data;
pub mod eval;
pub mod mlp;
pub mod pipeline;
pub mod rng;
pub mod sample;
pub mod synth;
pub mod trainer;
