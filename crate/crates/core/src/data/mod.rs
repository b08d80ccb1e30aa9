//! Emotion labels, multimodal samples and datasets.

mod dataset;
mod label;
mod split;
mod synthetic;

pub use dataset::{read_jsonl, write_jsonl, Dataset, Modality, Sample, Widths};
pub use label::EmotionLabel;
pub use split::{split, Split};
pub use synthetic::{generate_synthetic, prototype, SyntheticSpec, REFERENCE_TRAIN_COUNTS};
