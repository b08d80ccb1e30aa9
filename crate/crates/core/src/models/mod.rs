//! Emotion classifiers over audio/video/text embeddings.
//!
//! Three architectures share one parameter container ([`Model`]):
//!
//! - `audio`: an MLP on the audio embedding alone.
//! - `baseline`: per-modality projections, concatenated, then an MLP.
//! - `agt`: the audio-guided transformer. Audio is paired with video and
//!   with text as two 2-token sequences; each pair runs through its own stack
//!   of context-based transformer blocks, is mean-pooled, and the two stream
//!   vectors are gated by cosine similarity, summed and layer-normalized
//!   before the classification head.
//!
//! Training applies one dropout rate to the projected modality features,
//! to both residual branches of every transformer block and to the input of
//! the last linear layer.

mod agt;
mod alignment;
mod file;
mod mlp;
mod predict;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::{Dataset, Sample, Widths};
use crate::error::{Error, Result};
use crate::nn::{Bound, Dropout, ParamSet};
use crate::rng::SplitMix64;
use crate::NUM_CLASSES;

pub use alignment::{contrastive_loss, contrastive_loss_value, train_alignment, AlignmentHead};
pub use file::{load_model, save_model, FORMAT_VERSION};
pub use predict::{predict, read_predictions, write_predictions, PredictionRecord};
pub use train::{train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Audio-only MLP (stands in for the robust audio predictor).
    #[serde(rename = "audio")]
    AudioOnly,
    Baseline,
    Agt,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::AudioOnly,
        Architecture::Baseline,
        Architecture::Agt,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::AudioOnly => "audio",
            Architecture::Baseline => "baseline",
            Architecture::Agt => "agt",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" | "audio-only" => Ok(Architecture::AudioOnly),
            "baseline" => Ok(Architecture::Baseline),
            "agt" => Ok(Architecture::Agt),
            other => Err(Error::InvalidParameter(format!(
                "unknown architecture `{other}`"
            ))),
        }
    }
}

/// Hyperparameters for all three architectures; each uses the subset it
/// needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub widths: Widths,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Transformer blocks per AGT stream.
    pub n_layers: usize,
    /// Hidden width of the audio-only and baseline MLPs.
    pub hidden: usize,
    /// Similarity threshold of the AGT stream gate.
    pub theta_sim: f64,
    /// Dropout rate used while training.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            widths: Widths::uniform(64),
            d_model: 128,
            n_heads: 4,
            d_ff: 256,
            n_layers: 2,
            hidden: 128,
            theta_sim: 0.2,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.widths;
        if w.audio == 0 || w.video == 0 || w.text == 0 {
            return Err(Error::InvalidParameter(format!(
                "input widths must be positive: {w:?}"
            )));
        }
        if self.d_model == 0 || self.hidden == 0 {
            return Err(Error::InvalidParameter(
                "d_model and hidden must be positive".into(),
            ));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidParameter(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_ff < self.d_model {
            return Err(Error::InvalidParameter(format!(
                "d_ff {} must be at least d_model {}",
                self.d_ff, self.d_model
            )));
        }
        crate::nn::AmfParams::new(self.theta_sim)?;
        crate::nn::check_dropout_rate(self.dropout)?;
        Ok(())
    }
}

/// Constant batch inputs recorded on a tape, each `[batch, width]`.
#[derive(Debug, Clone, Copy)]
pub struct BatchInputs {
    pub audio: Var,
    pub video: Var,
    pub text: Var,
}

impl BatchInputs {
    pub fn record(tape: &mut Tape, samples: &[&Sample]) -> Result<Self> {
        let stack = |tape: &mut Tape, f: &dyn Fn(&Sample) -> &[f64]| -> Result<Var> {
            let w = f(samples[0]).len();
            let mut data = Vec::with_capacity(samples.len() * w);
            for s in samples {
                data.extend_from_slice(f(s));
            }
            Ok(tape.constant(Tensor::matrix(samples.len(), w, data)?))
        };
        if samples.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        Ok(Self {
            audio: stack(tape, &|s| &s.audio)?,
            video: stack(tape, &|s| &s.video)?,
            text: stack(tape, &|s| &s.text)?,
        })
    }
}

/// A classifier: architecture tag, hyperparameters and named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl Model {
    /// Freshly initialised parameters drawn from `seed`.
    pub fn new(arch: Architecture, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(SplitMix64::derive(seed, &[arch as u64]));
        let mut params = ParamSet::new();
        match arch {
            Architecture::AudioOnly => mlp::init_audio_only(&mut params, &config, &mut rng),
            Architecture::Baseline => mlp::init_baseline(&mut params, &config, &mut rng),
            Architecture::Agt => agt::init(&mut params, &config, &mut rng)?,
        }
        Ok(Self {
            arch,
            config,
            params,
        })
    }

    pub fn check_widths(&self, widths: Widths) -> Result<()> {
        if widths != self.config.widths {
            return Err(Error::dim(
                "model",
                format!(
                    "data widths {:?} do not match model widths {:?}",
                    widths, self.config.widths
                ),
            ));
        }
        Ok(())
    }

    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Ok(());
        }
        self.check_widths(data.widths())
    }

    /// Record the inference forward pass; returns logits `[batch, 6]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: BatchInputs) -> Result<Var> {
        self.forward_with(tape, p, x, &mut Dropout::off())
    }

    /// Forward pass with explicit dropout, as used in training.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: BatchInputs,
        drop: &mut Dropout,
    ) -> Result<Var> {
        let logits = match self.arch {
            Architecture::AudioOnly => mlp::audio_only_forward(tape, p, x, drop)?,
            Architecture::Baseline => mlp::baseline_forward(tape, p, x, drop)?,
            Architecture::Agt => agt::forward(tape, p, &self.config, x, drop)?,
        };
        debug_assert_eq!(tape.value(logits).last_dim(), NUM_CLASSES);
        Ok(logits)
    }

    /// Logits for a single sample.
    pub fn logits(&self, audio: &[f64], video: &[f64], text: &[f64]) -> Result<Tensor> {
        self.check_widths(Widths {
            audio: audio.len(),
            video: video.len(),
            text: text.len(),
        })?;
        let sample = Sample {
            id: String::new(),
            audio: audio.to_vec(),
            video: video.to_vec(),
            text: text.to_vec(),
            label: None,
        };
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = BatchInputs::record(&mut tape, &[&sample])?;
        let out = self.forward(&mut tape, &bound, x)?;
        tape.value(out).reshape(vec![NUM_CLASSES])
    }
}
