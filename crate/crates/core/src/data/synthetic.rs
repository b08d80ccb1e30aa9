//! Seeded synthetic multimodal data.
//!
//! Each (class, modality) pair owns a unit-norm prototype drawn from a
//! Gaussian seeded by `(seed, class, modality)`. A sample is its class
//! prototype plus isotropic Gaussian noise in every modality. With
//! probability `conflict_rate` one modality (chosen from
//! `conflict_modalities`) is built from a different class's prototype
//! instead, producing a sample whose modalities disagree.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, EmotionLabel, Modality, Sample, Widths};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Training-set label counts in code order (worry, happy, neutral, angry,
/// surprise, sad).
pub const REFERENCE_TRAIN_COUNTS: [usize; 6] = [616, 1038, 1248, 1208, 190, 730];

const PROTOTYPE_TAG: u64 = 0x5052_4f54;
const SAMPLE_TAG: u64 = 0x5341_4d50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    /// Samples per class, indexed by label code.
    pub counts: [usize; 6],
    pub widths: Widths,
    pub noise_sigma: f64,
    pub conflict_rate: f64,
    /// Modalities eligible for replacement in a conflicting sample.
    pub conflict_modalities: Vec<Modality>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            counts: REFERENCE_TRAIN_COUNTS,
            widths: Widths::uniform(64),
            noise_sigma: 0.3,
            conflict_rate: 0.2,
            conflict_modalities: vec![Modality::Video, Modality::Text],
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.counts.iter().sum::<usize>() == 0 {
            return Err(Error::InvalidParameter("total sample count is zero".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.conflict_rate) {
            return Err(Error::InvalidParameter(format!(
                "conflict_rate must lie in [0, 1], got {}",
                self.conflict_rate
            )));
        }
        if self.conflict_rate > 0.0 && self.conflict_modalities.is_empty() {
            return Err(Error::InvalidParameter(
                "conflict_rate > 0 needs at least one conflict modality".into(),
            ));
        }
        if Modality::ALL.iter().any(|&m| self.widths.of(m) == 0) {
            return Err(Error::InvalidParameter(format!(
                "widths must be positive, got {:?}",
                self.widths
            )));
        }
        Ok(())
    }
}

/// Unit-norm prototype for `(class, modality)` under `seed`.
pub fn prototype(class: EmotionLabel, modality: Modality, width: usize, seed: u64) -> Vec<f64> {
    let s = SplitMix64::derive(
        seed,
        &[PROTOTYPE_TAG, class.code() as u64, modality.index() as u64],
    );
    let mut rng = SplitMix64::new(s);
    let mut v: Vec<f64> = (0..width)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Generate a labeled dataset. Samples appear grouped by class in code
/// order, with ids `<label name>-<index>`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let protos: Vec<[Vec<f64>; 3]> = EmotionLabel::ALL
        .iter()
        .map(|&c| Modality::ALL.map(|m| prototype(c, m, spec.widths.of(m), spec.seed)))
        .collect();

    let mut rng = SplitMix64::new(SplitMix64::derive(spec.seed, &[SAMPLE_TAG]));
    let mut samples = Vec::with_capacity(spec.counts.iter().sum());
    for class in EmotionLabel::ALL {
        for k in 0..spec.counts[class.index()] {
            let mut source = [class.index(); 3];
            if rng.next_unit() < spec.conflict_rate {
                let pick = (rng.next_unit() * spec.conflict_modalities.len() as f64) as usize;
                let m = spec.conflict_modalities[pick.min(spec.conflict_modalities.len() - 1)];
                let offset = 1 + ((rng.next_unit() * 5.0) as usize).min(4);
                source[m.index()] = (class.index() + offset) % 6;
            }
            let mut vecs = Modality::ALL.map(|m| {
                let proto = &protos[source[m.index()]][m.index()];
                proto
                    .iter()
                    .map(|&p| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        p + spec.noise_sigma * z
                    })
                    .collect::<Vec<f64>>()
            });
            samples.push(Sample {
                id: format!("{}-{k:05}", class.name()),
                audio: std::mem::take(&mut vecs[0]),
                video: std::mem::take(&mut vecs[1]),
                text: std::mem::take(&mut vecs[2]),
                label: Some(class),
            });
        }
    }
    Dataset::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ops::cosine_similarity;

    fn small(sigma: f64, conflict: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            counts: [5, 5, 5, 5, 5, 5],
            widths: Widths {
                audio: 8,
                video: 6,
                text: 4,
            },
            noise_sigma: sigma,
            conflict_rate: conflict,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn reference_counts() {
        let ds = generate_synthetic(&SyntheticSpec {
            widths: Widths::uniform(4),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(ds.label_counts(), [616, 1038, 1248, 1208, 190, 730]);
        assert_eq!(ds.len(), 5030);
    }

    #[test]
    fn noiseless_classes_are_identical() {
        let ds = generate_synthetic(&small(0.0, 0.0, 3)).unwrap();
        for class in EmotionLabel::ALL {
            let members: Vec<_> = ds
                .samples()
                .iter()
                .filter(|s| s.label == Some(class))
                .collect();
            for s in &members[1..] {
                assert_eq!(s.audio, members[0].audio);
                assert_eq!(s.video, members[0].video);
                assert_eq!(s.text, members[0].text);
            }
            let norm: f64 = members[0].audio.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(&small(0.3, 0.2, 11)).unwrap();
        let b = generate_synthetic(&small(0.3, 0.2, 11)).unwrap();
        let c = generate_synthetic(&small(0.3, 0.2, 12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn conflicts_replace_only_eligible_modalities() {
        let spec = SyntheticSpec {
            conflict_rate: 1.0,
            conflict_modalities: vec![Modality::Text],
            ..small(0.0, 1.0, 5)
        };
        let ds = generate_synthetic(&spec).unwrap();
        for s in ds.samples() {
            let c = s.label.unwrap();
            assert_eq!(s.audio, prototype(c, Modality::Audio, 8, 5));
            assert_eq!(s.video, prototype(c, Modality::Video, 6, 5));
            assert_ne!(s.text, prototype(c, Modality::Text, 4, 5));
        }
    }

    #[test]
    fn within_class_more_similar_than_across() {
        let spec = SyntheticSpec {
            counts: [40; 6],
            widths: Widths::uniform(32),
            noise_sigma: 0.1,
            conflict_rate: 0.0,
            seed: 9,
            ..Default::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let s = ds.samples();
        let (mut within, mut across) = (Vec::new(), Vec::new());
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                let c = cosine_similarity(&s[i].audio, &s[j].audio);
                if s[i].label == s[j].label {
                    within.push(c);
                } else {
                    across.push(c);
                }
            }
        }
        assert!(within.len() >= 100 && across.len() >= 100);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&within) > mean(&across) + 0.5);
    }

    #[test]
    fn invalid_specs() {
        let mut s = small(0.1, 0.0, 0);
        s.counts = [0; 6];
        assert!(generate_synthetic(&s).is_err());
        assert!(generate_synthetic(&small(-0.1, 0.0, 0)).is_err());
        assert!(generate_synthetic(&small(0.1, 1.5, 0)).is_err());
    }
}
