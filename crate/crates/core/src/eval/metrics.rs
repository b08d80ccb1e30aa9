use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::data::EmotionLabel;
use crate::error::{Error, Result};
use crate::NUM_CLASSES;

/// Counts indexed `[truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_labels(preds: &[EmotionLabel], truths: &[EmotionLabel]) -> Result<Self> {
        if preds.len() != truths.len() {
            return Err(Error::IdMismatch(format!(
                "{} predictions for {} truths",
                preds.len(),
                truths.len()
            )));
        }
        let mut m = Self::default();
        for (p, t) in preds.iter().zip(truths) {
            m.counts[t.index()][p.index()] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    /// Samples whose true label is `c`.
    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    /// Samples predicted as `c`.
    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth\\pred");
        for l in EmotionLabel::ALL {
            out.push(',');
            out.push_str(l.name());
        }
        out.push('\n');
        for l in EmotionLabel::ALL {
            out.push_str(l.name());
            for n in self.counts[l.index()] {
                let _ = write!(out, ",{n}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Weighted,
    Macro,
    PerClass,
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "weighted" => Ok(Self::Weighted),
            "macro" => Ok(Self::Macro),
            "per_class" => Ok(Self::PerClass),
            _ => Err(Error::InvalidParameter(format!(
                "unknown averaging `{s}` (expected weighted, macro or per-class)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScore {
    pub label: EmotionLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// A zero denominator forced part of this score to 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Report {
    pub per_class: [ClassScore; NUM_CLASSES],
    pub weighted: f64,
    /// Mean over the classes that occur in the truths or the predictions.
    pub macro_avg: f64,
    /// Present classes whose score hit a zero denominator.
    pub zero_division: usize,
    pub confusion: ConfusionMatrix,
}

impl F1Report {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let total = confusion.total();
        if total == 0 {
            return Err(Error::Data("cannot score an empty prediction set".into()));
        }
        let per_class = EmotionLabel::ALL.map(|label| {
            let c = label.index();
            let tp = confusion.true_positives(c) as f64;
            let predicted = confusion.predicted(c);
            let support = confusion.support(c);
            let precision = if predicted == 0 {
                0.0
            } else {
                tp / predicted as f64
            };
            let recall = if support == 0 {
                0.0
            } else {
                tp / support as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScore {
                label,
                precision,
                recall,
                f1,
                support,
                zero_division: predicted == 0 || support == 0 || precision + recall == 0.0,
            }
        });
        let weighted = per_class
            .iter()
            .map(|s| s.support as f64 * s.f1)
            .sum::<f64>()
            / total as f64;
        let present: Vec<&ClassScore> = per_class
            .iter()
            .filter(|s| s.support > 0 || confusion.predicted(s.label.index()) > 0)
            .collect();
        let macro_avg = present.iter().map(|s| s.f1).sum::<f64>() / present.len() as f64;
        let zero_division = present.iter().filter(|s| s.zero_division).count();
        Ok(Self {
            per_class,
            weighted,
            macro_avg,
            zero_division,
            confusion,
        })
    }

    pub fn headline(&self, averaging: Averaging) -> Option<f64> {
        match averaging {
            Averaging::Weighted => Some(self.weighted),
            Averaging::Macro => Some(self.macro_avg),
            Averaging::PerClass => None,
        }
    }

    /// Columns `scope,precision,recall,f1,support,zero_division`; one row
    /// per class followed by the `weighted` and `macro` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,precision,recall,f1,support,zero_division\n");
        for s in &self.per_class {
            let _ = writeln!(
                out,
                "{},{:.4},{:.4},{:.4},{},{}",
                s.label.name(),
                s.precision,
                s.recall,
                s.f1,
                s.support,
                u8::from(s.zero_division)
            );
        }
        let total = self.confusion.total();
        let _ = writeln!(
            out,
            "weighted,,,{:.4},{total},{}",
            self.weighted, self.zero_division
        );
        let _ = writeln!(
            out,
            "macro,,,{:.4},{total},{}",
            self.macro_avg, self.zero_division
        );
        out
    }
}

pub fn f1_from_labels(preds: &[EmotionLabel], truths: &[EmotionLabel]) -> Result<F1Report> {
    F1Report::from_confusion(ConfusionMatrix::from_labels(preds, truths)?)
}

/// Score predictions against truths joined by id. Both sides must carry
/// exactly the same ids.
pub fn f1_scores(
    preds: &[(String, EmotionLabel)],
    truths: &[(String, EmotionLabel)],
) -> Result<F1Report> {
    let mut by_id: HashMap<&str, EmotionLabel> = HashMap::with_capacity(preds.len());
    for (id, l) in preds {
        if by_id.insert(id, *l).is_some() {
            return Err(Error::IdMismatch(format!("duplicate prediction id `{id}`")));
        }
    }
    let mut p = Vec::with_capacity(truths.len());
    let mut t = Vec::with_capacity(truths.len());
    let mut missing = Vec::new();
    for (id, l) in truths {
        match by_id.remove(id.as_str()) {
            Some(pl) => {
                p.push(pl);
                t.push(*l);
            }
            None => missing.push(id.as_str()),
        }
    }
    if !missing.is_empty() || !by_id.is_empty() {
        let mut extra: Vec<&str> = by_id.keys().copied().collect();
        extra.sort_unstable();
        return Err(Error::IdMismatch(format!(
            "predictions missing [{}]; predictions without truth [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    f1_from_labels(&p, &t)
}
