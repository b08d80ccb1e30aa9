use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BatchInputs, Model};
use crate::autodiff::{ops, Tape};
use crate::data::{Dataset, EmotionLabel, Sample};
use crate::error::{Error, Result};
use crate::io::{read_jsonl_records, write_jsonl_records};
use crate::NUM_CLASSES;

const PREDICT_BATCH: usize = 256;

/// Class probabilities for one sample with their argmax and maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub probs: [f64; NUM_CLASSES],
    pub label: EmotionLabel,
    pub confidence: f64,
}

impl PredictionRecord {
    /// Builds the record from a probability vector; the label is the first
    /// index attaining the maximum.
    pub fn from_probs(id: impl Into<String>, probs: [f64; NUM_CLASSES]) -> Self {
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Self {
            id: id.into(),
            probs,
            label: EmotionLabel::ALL[best],
            confidence: probs[best],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Data(format!(
                "prediction `{}`: probabilities do not form a distribution (sum {sum})",
                self.id
            )));
        }
        let max = self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.confidence != max || self.probs[self.label.index()] != max {
            return Err(Error::Data(format!(
                "prediction `{}`: label/confidence disagree with probabilities",
                self.id
            )));
        }
        Ok(())
    }
}

/// Softmax predictions for every sample of `data`, in dataset order.
pub fn predict(model: &Model, data: &Dataset) -> Result<Vec<PredictionRecord>> {
    model.check_dataset(data)?;
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.samples().chunks(PREDICT_BATCH) {
        let samples: Vec<&Sample> = chunk.iter().collect();
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape, false);
        let x = BatchInputs::record(&mut tape, &samples)?;
        let logits = model.forward(&mut tape, &bound, x)?;
        let probs = ops::softmax(tape.value(logits), 1)?;
        for (s, row) in chunk.iter().zip(probs.data().chunks(NUM_CLASSES)) {
            let mut p = [0.0; NUM_CLASSES];
            p.copy_from_slice(row);
            out.push(PredictionRecord::from_probs(s.id.clone(), p));
        }
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, preds: &[PredictionRecord]) -> Result<()> {
    write_jsonl_records(path, preds)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    read_jsonl_records(path, |line, _| {
        let rec: PredictionRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        rec.validate().map_err(|e| e.to_string())?;
        Ok(rec)
    })
}
