use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{BatchInputs, Model};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Reduction, Tape, Tensor};
use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::nn::Dropout;
use crate::rng::SplitMix64;

const DROPOUT_TAG: u64 = 0x4452_4f50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Minibatch Adam on mean cross-entropy. The sample order of every epoch is
/// a seeded shuffle, so the run is a pure function of its inputs. Returns the
/// mean training loss of each epoch.
pub fn train(model: &mut Model, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter(
            "batch_size must be positive".into(),
        ));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lr must be >= 0, got {}",
            cfg.lr
        )));
    }
    model.check_widths(data.widths())?;
    let labels = data.labels()?;

    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&model.params.iter().map(|(_, t)| t).collect::<Vec<_>>());
    let mut rng = SplitMix64::new(SplitMix64::derive(cfg.seed, &[0x5348_5546]));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut drop = Dropout::training(
        model.config.dropout,
        SplitMix64::derive(cfg.seed, &[DROPOUT_TAG]),
    )?;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let samples: Vec<&Sample> = batch.iter().map(|&i| &data.samples()[i]).collect();
            let targets: Vec<usize> = batch.iter().map(|&i| labels[i].index()).collect();

            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape, true);
            let x = BatchInputs::record(&mut tape, &samples)?;
            let logits = model.forward_with(&mut tape, &bound, x, &mut drop)?;
            let loss = tape.cross_entropy(logits, &targets, Reduction::Mean)?;
            total += tape.value(loss).item() * batch.len() as f64;
            tape.backward(loss)?;

            let grads: Vec<Tensor> = bound
                .iter()
                .map(|(_, v)| {
                    tape.grad(v)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
                })
                .collect();
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            let mut params: Vec<&mut Tensor> = model.params.values_mut().collect();
            adam_step(&mut params, &grad_refs, &mut state, &adam)?;
        }
        curve.push(total / data.len() as f64);
    }
    Ok(curve)
}
