use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EmotionLabel;
use crate::error::{Error, Result};
use crate::io::{read_jsonl_records, write_jsonl_records};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Video,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Audio, Modality::Video, Modality::Text];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One utterance: pre-extracted audio, video and text embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    pub audio: Vec<f64>,
    pub video: Vec<f64>,
    pub text: Vec<f64>,
    #[serde(default)]
    pub label: Option<EmotionLabel>,
}

impl Sample {
    pub fn modality(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Audio => &self.audio,
            Modality::Video => &self.video,
            Modality::Text => &self.text,
        }
    }

    pub fn modality_mut(&mut self, m: Modality) -> &mut Vec<f64> {
        match m {
            Modality::Audio => &mut self.audio,
            Modality::Video => &mut self.video,
            Modality::Text => &mut self.text,
        }
    }

    pub fn widths(&self) -> Widths {
        Widths {
            audio: self.audio.len(),
            video: self.video.len(),
            text: self.text.len(),
        }
    }
}

/// Embedding widths `(d_a, d_v, d_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Widths {
    pub audio: usize,
    pub video: usize,
    pub text: usize,
}

impl Widths {
    pub fn uniform(d: usize) -> Self {
        Self {
            audio: d,
            video: d,
            text: d,
        }
    }

    pub fn of(&self, m: Modality) -> usize {
        match m {
            Modality::Audio => self.audio,
            Modality::Video => self.video,
            Modality::Text => self.text,
        }
    }
}

/// Ordered samples with uniform widths and unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
    widths: Widths,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let widths = samples.first().map(Sample::widths).unwrap_or_default();
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.widths() != widths {
                return Err(Error::Data(format!(
                    "sample `{}` has widths {:?}, expected {:?}",
                    s.id,
                    s.widths(),
                    widths
                )));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id `{}`", s.id)));
            }
        }
        Ok(Self { samples, widths })
    }

    pub fn empty(widths: Widths) -> Self {
        Self {
            samples: Vec::new(),
            widths,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn widths(&self) -> Widths {
        self.widths
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn is_labeled(&self, id: &str) -> Option<bool> {
        self.get(id).map(|s| s.label.is_some())
    }

    pub fn all_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.label.is_some())
    }

    pub fn labeled_count(&self) -> usize {
        self.samples.iter().filter(|s| s.label.is_some()).count()
    }

    /// Labels of every sample; errors on the first unlabeled one.
    pub fn labels(&self) -> Result<Vec<EmotionLabel>> {
        self.samples
            .iter()
            .map(|s| {
                s.label
                    .ok_or_else(|| Error::Data(format!("sample `{}` is unlabeled", s.id)))
            })
            .collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }

    /// Per-class counts of labeled samples.
    pub fn label_counts(&self) -> [usize; 6] {
        let mut counts = [0; 6];
        for l in self.samples.iter().filter_map(|s| s.label) {
            counts[l.index()] += 1;
        }
        counts
    }

    pub fn without_labels(&self) -> Self {
        let samples = self
            .samples
            .iter()
            .cloned()
            .map(|mut s| {
                s.label = None;
                s
            })
            .collect();
        Self {
            samples,
            widths: self.widths,
        }
    }

    /// Replace every modality not in `keep` with zeros (same width).
    pub fn keep_modalities(&self, keep: &[Modality]) -> Self {
        let mut out = self.clone();
        for s in &mut out.samples {
            for m in Modality::ALL {
                if !keep.contains(&m) {
                    s.modality_mut(m).iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        out
    }

    /// Samples at the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            widths: self.widths,
        }
    }

    /// Concatenate two datasets; ids must stay unique.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        Self::new(samples)
    }
}

/// Read a dataset from JSONL (`{"id","audio","video","text","label"}` per
/// line). Blank lines are ignored.
pub fn read_jsonl(path: &Path) -> Result<Dataset> {
    let samples = read_jsonl_records(path, |line, _| {
        serde_json::from_str::<Sample>(line).map_err(|e| e.to_string())
    })?;
    Dataset::new(samples)
}

pub fn write_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    write_jsonl_records(path, dataset.samples())
}
