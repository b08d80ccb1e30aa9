//! Pseudo-labelling and staged self-training.
//!
//! Stage 1 trains the audio-only, baseline and AGT classifiers on labeled
//! data. Every later stage predicts the unlabeled pool with the previous
//! stage's models, keeps predictions whose confidence is strictly above the
//! threshold, intersects the three kept sets (same id *and* same label),
//! adds the survivors to the labeled pool and retrains all three models from
//! their initial parameters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EmotionLabel, Sample};
use crate::error::{Error, Result};
use crate::eval::f1_from_labels;
use crate::io::{read_jsonl_records, write_jsonl_records};
use crate::models::{
    predict, train, Architecture, Model, ModelConfig, PredictionRecord, TrainConfig,
};
use crate::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub id: String,
    pub probs: [f64; NUM_CLASSES],
    pub label: EmotionLabel,
    pub confidence: f64,
}

/// Accepted pseudo-labels and a description of the models that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub entries: Vec<PseudoLabel>,
    pub source: String,
    pub threshold: f64,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn composition(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for e in &self.entries {
            c[e.label.index()] += 1;
        }
        c
    }

    fn index(&self) -> Result<HashMap<&str, &PseudoLabel>> {
        let mut map = HashMap::with_capacity(self.entries.len());
        for e in &self.entries {
            if map.insert(e.id.as_str(), e).is_some() {
                return Err(Error::Data(format!(
                    "duplicate id `{}` in pseudo-label set from {}",
                    e.id, self.source
                )));
            }
        }
        Ok(map)
    }
}

/// Keep predictions with confidence strictly greater than `threshold`.
pub fn confidence_filter(
    preds: &[PredictionRecord],
    threshold: f64,
    source: &str,
) -> Result<PseudoLabelSet> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let entries = preds
        .iter()
        .filter(|p| p.confidence > threshold)
        .map(|p| PseudoLabel {
            id: p.id.clone(),
            probs: p.probs,
            label: p.label,
            confidence: p.confidence,
        })
        .collect();
    Ok(PseudoLabelSet {
        entries,
        source: source.to_string(),
        threshold,
    })
}

/// Samples present in all three sets with the same label. The surviving
/// entry is the one with the lowest confidence among the three.
pub fn intersect_pseudo_labels(sets: &[PseudoLabelSet; 3]) -> Result<PseudoLabelSet> {
    let idx = [sets[0].index()?, sets[1].index()?, sets[2].index()?];
    let mut entries = Vec::new();
    for first in &sets[0].entries {
        let (Some(b), Some(c)) = (idx[1].get(first.id.as_str()), idx[2].get(first.id.as_str()))
        else {
            continue;
        };
        if b.label != first.label || c.label != first.label {
            continue;
        }
        let mut weakest = first;
        for cand in [*b, *c] {
            if cand.confidence < weakest.confidence {
                weakest = cand;
            }
        }
        entries.push(weakest.clone());
    }
    let threshold = sets
        .iter()
        .map(|s| s.threshold)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PseudoLabelSet {
        entries,
        source: sets
            .iter()
            .map(|s| s.source.as_str())
            .collect::<Vec<_>>()
            .join("&"),
        threshold,
    })
}

#[derive(Serialize, Deserialize)]
struct PseudoLabelLine {
    id: String,
    probs: [f64; NUM_CLASSES],
    label: EmotionLabel,
    confidence: f64,
    source: String,
}

pub fn write_pseudo_labels(path: &Path, set: &PseudoLabelSet) -> Result<()> {
    let lines: Vec<PseudoLabelLine> = set
        .entries
        .iter()
        .map(|e| PseudoLabelLine {
            id: e.id.clone(),
            probs: e.probs,
            label: e.label,
            confidence: e.confidence,
            source: set.source.clone(),
        })
        .collect();
    write_jsonl_records(path, &lines)
}

/// Read a pseudo-label file. The threshold is not stored; it is reported as
/// the minimum confidence present (0 for an empty file).
pub fn read_pseudo_labels(path: &Path) -> Result<PseudoLabelSet> {
    let lines = read_jsonl_records(path, |line, _| {
        serde_json::from_str::<PseudoLabelLine>(line).map_err(|e| e.to_string())
    })?;
    let source = lines.first().map(|l| l.source.clone()).unwrap_or_default();
    let threshold = lines
        .iter()
        .map(|l| l.confidence)
        .fold(f64::INFINITY, f64::min);
    Ok(PseudoLabelSet {
        entries: lines
            .into_iter()
            .map(|l| PseudoLabel {
                id: l.id,
                probs: l.probs,
                label: l.label,
                confidence: l.confidence,
            })
            .collect(),
        source,
        threshold: if threshold.is_finite() {
            threshold
        } else {
            0.0
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfTrainConfig {
    pub stages: usize,
    pub threshold: f64,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        Self {
            stages: 2,
            threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub train_size: usize,
    /// Accepted by each model's confidence filter (audio, baseline, agt).
    pub filtered: [usize; 3],
    pub pseudo_labels: usize,
    pub composition: [usize; NUM_CLASSES],
    /// Weighted F1 of (audio, baseline, agt) on the validation set, when one
    /// was supplied.
    pub val_f1: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct Stage {
    /// Audio-only, baseline and AGT models, in that order.
    pub models: [Model; 3],
    pub pseudo: Option<PseudoLabelSet>,
    pub report: StageReport,
}

#[derive(Debug, Clone)]
pub struct SelfTrainOutcome {
    pub stages: Vec<Stage>,
}

impl SelfTrainOutcome {
    pub fn final_models(&self) -> &[Model; 3] {
        &self.stages.last().expect("at least one stage").models
    }

    pub fn reports(&self) -> Vec<StageReport> {
        self.stages.iter().map(|s| s.report.clone()).collect()
    }

    /// CSV with one row per stage.
    pub fn report_csv(&self) -> String {
        let mut out = String::from(
            "stage,train_size,filtered_audio,filtered_baseline,filtered_agt,pseudo_labels",
        );
        for l in EmotionLabel::ALL {
            out.push_str(&format!(",pl_{}", l.name()));
        }
        out.push_str(",val_f1_audio,val_f1_baseline,val_f1_agt\n");
        for r in self.reports() {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                r.stage, r.train_size, r.filtered[0], r.filtered[1], r.filtered[2], r.pseudo_labels
            ));
            for c in r.composition {
                out.push_str(&format!(",{c}"));
            }
            match r.val_f1 {
                Some(f) => out.push_str(&format!(",{:.4},{:.4},{:.4}\n", f[0], f[1], f[2])),
                None => out.push_str(",,,\n"),
            }
        }
        out
    }
}

fn train_three(model_cfg: &ModelConfig, pool: &Dataset, cfg: &TrainConfig) -> Result<[Model; 3]> {
    let results: Vec<Result<Model>> = std::thread::scope(|scope| {
        let handles: Vec<_> = Architecture::ALL
            .iter()
            .map(|&arch| {
                scope.spawn(move || {
                    let mut m = Model::new(arch, model_cfg.clone(), cfg.seed)?;
                    train(&mut m, pool, cfg)?;
                    Ok(m)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let mut it = results.into_iter();
    Ok([
        it.next().unwrap()?,
        it.next().unwrap()?,
        it.next().unwrap()?,
    ])
}

fn val_scores(models: &[Model; 3], val: Option<&Dataset>) -> Result<Option<[f64; 3]>> {
    let Some(val) = val.filter(|v| !v.is_empty()) else {
        return Ok(None);
    };
    let truth = val.labels()?;
    let mut out = [0.0; 3];
    for (o, m) in out.iter_mut().zip(models) {
        let pred: Vec<EmotionLabel> = predict(m, val)?.into_iter().map(|p| p.label).collect();
        *o = f1_from_labels(&pred, &truth)?.weighted;
    }
    Ok(Some(out))
}

/// Run staged self-training; see the module docs.
pub fn self_train(
    model_cfg: &ModelConfig,
    labeled: &Dataset,
    unlabeled: &Dataset,
    val: Option<&Dataset>,
    st: &SelfTrainConfig,
    train_cfg: &TrainConfig,
) -> Result<SelfTrainOutcome> {
    if st.stages == 0 {
        return Err(Error::InvalidParameter(
            "self-training needs at least one stage".into(),
        ));
    }
    if labeled.is_empty() {
        return Err(Error::Data("labeled set is empty".into()));
    }
    labeled.labels()?;
    let labeled_ids: HashSet<&str> = labeled.ids().collect();
    // Only samples without a label are eligible for pseudo-labelling.
    let eligible: Vec<Sample> = unlabeled
        .samples()
        .iter()
        .filter(|s| s.label.is_none())
        .cloned()
        .collect();
    if let Some(s) = eligible
        .iter()
        .find(|s| labeled_ids.contains(s.id.as_str()))
    {
        return Err(Error::Data(format!(
            "unlabeled sample `{}` shares its id with a labeled sample",
            s.id
        )));
    }
    let pool_unlabeled = if eligible.is_empty() {
        Dataset::empty(labeled.widths())
    } else {
        Dataset::new(eligible)?
    };

    let mut stages: Vec<Stage> = Vec::with_capacity(st.stages);
    let models = train_three(model_cfg, labeled, train_cfg)?;
    stages.push(Stage {
        report: StageReport {
            stage: 1,
            train_size: labeled.len(),
            filtered: [0; 3],
            pseudo_labels: 0,
            composition: [0; NUM_CLASSES],
            val_f1: val_scores(&models, val)?,
        },
        models,
        pseudo: None,
    });

    for stage in 2..=st.stages {
        let prev = &stages.last().unwrap().models;
        let mut kept = Vec::with_capacity(3);
        for m in prev {
            let preds = if pool_unlabeled.is_empty() {
                Vec::new()
            } else {
                predict(m, &pool_unlabeled)?
            };
            kept.push(confidence_filter(&preds, st.threshold, m.arch.tag())?);
        }
        let filtered = [kept[0].len(), kept[1].len(), kept[2].len()];
        let kept: [PseudoLabelSet; 3] = kept.try_into().expect("three sets");
        let pseudo = intersect_pseudo_labels(&kept)?;

        let by_id: BTreeMap<&str, EmotionLabel> = pseudo
            .entries
            .iter()
            .map(|e| (e.id.as_str(), e.label))
            .collect();
        let added: Vec<Sample> = pool_unlabeled
            .samples()
            .iter()
            .filter_map(|s| {
                by_id.get(s.id.as_str()).map(|&l| Sample {
                    label: Some(l),
                    ..s.clone()
                })
            })
            .collect();
        let pool = if added.is_empty() {
            labeled.clone()
        } else {
            labeled.concat(&Dataset::new(added)?)?
        };
        let models = train_three(model_cfg, &pool, train_cfg)?;
        stages.push(Stage {
            report: StageReport {
                stage,
                train_size: pool.len(),
                filtered,
                pseudo_labels: pseudo.len(),
                composition: pseudo.composition(),
                val_f1: val_scores(&models, val)?,
            },
            models,
            pseudo: Some(pseudo),
        });
    }
    Ok(SelfTrainOutcome { stages })
}
