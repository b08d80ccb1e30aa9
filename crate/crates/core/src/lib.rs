//! Audio-guided multimodal emotion fusion.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense `f64` tensors, a reverse-mode tape, Adam and a
//!   finite-difference gradient checker.
//! - [`nn`]: multi-head self-attention, the context-based transformer block
//!   and similarity gating of modality streams.
//! - [`models`]: audio-only, concatenation baseline and audio-guided
//!   transformer classifiers, the contrastive alignment head, training and
//!   prediction, model files.
//! - [`data`]: emotion labels, samples, JSONL datasets, the synthetic
//!   generator and stratified splits.
//! - [`semisup`]: confidence filtering, pseudo-label intersection and the
//!   staged self-training loop.
//! - [`vote`]: the regularized voting rule over three classifiers.
//! - [`eval`]: F1 metrics, label distribution reports and ablation grids.
//! - [`config`]: the TOML run configuration shared by the CLI.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod models;
pub mod nn;
pub mod rng;
pub mod semisup;
pub mod vote;

pub use autodiff::{Tape, Tensor, Var};
pub use data::{Dataset, EmotionLabel, Sample, Widths};
pub use error::{Error, Result};
pub use models::{Architecture, Model, ModelConfig, PredictionRecord, TrainConfig};
pub use rng::SplitMix64;
pub use vote::{VoteConfig, VoteTriple};

/// Number of emotion classes.
pub const NUM_CLASSES: usize = 6;
