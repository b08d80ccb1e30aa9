use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, split, Dataset, Modality, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::metrics::f1_from_labels;
use crate::models::{predict, Architecture, Model, ModelConfig, TrainConfig};
use crate::semisup::{self_train, SelfTrainConfig};
use crate::vote::{vote_all, VoteConfig, VoteTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Plain supervised training on the labeled split.
    N,
    /// Self-training with pseudo-labels.
    P,
    /// Self-training followed by regularized voting.
    PV,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::N, Strategy::P, Strategy::PV];

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::N => "N",
            Strategy::P => "P",
            Strategy::PV => "P+V",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "N" => Ok(Strategy::N),
            "P" => Ok(Strategy::P),
            "P+V" | "PV" => Ok(Strategy::PV),
            _ => Err(Error::InvalidParameter(format!("unknown strategy `{s}`"))),
        }
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of modalities written like `A+V+T`. Modalities outside the set are
/// zeroed before training and evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSet(Vec<Modality>);

impl FeatureSet {
    pub fn all() -> Self {
        FeatureSet(Modality::ALL.to_vec())
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.0
    }

    fn apply(&self, ds: &Dataset) -> Dataset {
        if self.0.len() == Modality::ALL.len() {
            ds.clone()
        } else {
            ds.keep_modalities(&self.0)
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self
            .0
            .iter()
            .map(|m| match m {
                Modality::Audio => "A",
                Modality::Video => "V",
                Modality::Text => "T",
            })
            .collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut mods = Vec::new();
        for part in s.split('+') {
            let m = match part.trim().to_ascii_lowercase().as_str() {
                "a" | "audio" => Modality::Audio,
                "v" | "video" => Modality::Video,
                "t" | "text" => Modality::Text,
                _ => return Err(Error::InvalidParameter(format!("bad feature set `{s}`"))),
            };
            if mods.contains(&m) {
                return Err(Error::InvalidParameter(format!(
                    "repeated modality in `{s}`"
                )));
            }
            mods.push(m);
        }
        mods.sort_by_key(|m| m.index());
        Ok(FeatureSet(mods))
    }
}

impl Serialize for FeatureSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationGrid {
    pub models: Vec<Architecture>,
    pub feature_sets: Vec<FeatureSet>,
    pub strategies: Vec<Strategy>,
}

impl Default for AblationGrid {
    fn default() -> Self {
        Self {
            models: vec![Architecture::Baseline, Architecture::Agt],
            feature_sets: vec![FeatureSet::all()],
            strategies: Strategy::ALL.to_vec(),
        }
    }
}

impl AblationGrid {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.feature_sets.is_empty() || self.strategies.is_empty() {
            return Err(Error::InvalidParameter(
                "ablation grid has an empty axis".into(),
            ));
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].contains(m) {
                return Err(Error::InvalidParameter(format!("model `{m}` listed twice")));
            }
        }
        for (i, f) in self.feature_sets.iter().enumerate() {
            if self.feature_sets[..i].contains(f) {
                return Err(Error::InvalidParameter(format!(
                    "feature set `{f}` listed twice"
                )));
            }
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].contains(s) {
                return Err(Error::InvalidParameter(format!(
                    "strategy `{s}` listed twice"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AblationConfig {
    pub grid: AblationGrid,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub semisup: SelfTrainConfig,
    pub vote: VoteConfig,
}

pub struct AblationData {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub model: Architecture,
    pub features: FeatureSet,
    /// Weighted F1 per strategy, in the grid's strategy order.
    pub f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub strategies: Vec<Strategy>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn get(
        &self,
        model: Architecture,
        features: &FeatureSet,
        strategy: Strategy,
    ) -> Option<f64> {
        let col = self.strategies.iter().position(|&s| s == strategy)?;
        self.rows
            .iter()
            .find(|r| r.model == model && &r.features == features)
            .map(|r| r.f1[col])
    }

    /// `model,features,<strategy>...` with 4-decimal weighted F1 cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,features");
        for s in &self.strategies {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.model, r.features);
            for v in &r.f1 {
                let _ = write!(out, ",{v:.4}");
            }
            out.push('\n');
        }
        out
    }
}

/// Vote configuration for a P+V cell: the companion share goes entirely to
/// the column's model.
fn column_vote(base: &VoteConfig, model: Architecture) -> VoteConfig {
    let share = base.companion_split[0] + base.companion_split[1];
    let companion_split = match model {
        Architecture::Baseline => [share, 0.0],
        Architecture::Agt => [0.0, share],
        Architecture::AudioOnly => base.companion_split,
    };
    VoteConfig {
        companion_split,
        ..base.clone()
    }
}

fn score(model: &Model, test: &Dataset) -> Result<f64> {
    let preds: Vec<_> = predict(model, test)?.into_iter().map(|p| p.label).collect();
    Ok(f1_from_labels(&preds, &test.labels()?)?.weighted)
}

/// Train and score every grid cell. Strategy N uses the stage-1 models of
/// the self-training run (plain training with the same seed), P the final
/// stage, and P+V votes the final-stage predictions.
pub fn ablation_run(cfg: &AblationConfig, data: &AblationData) -> Result<AblationTable> {
    cfg.grid.validate()?;
    cfg.vote.validate()?;
    if data.test.is_empty() {
        return Err(Error::Data("ablation test split is empty".into()));
    }
    let truths = data.test.labels()?;
    let needs_semisup = cfg.grid.strategies.iter().any(|s| *s != Strategy::N);
    let st = SelfTrainConfig {
        stages: if needs_semisup {
            cfg.semisup.stages.max(2)
        } else {
            1
        },
        ..cfg.semisup.clone()
    };

    let mut rows = Vec::new();
    for features in &cfg.grid.feature_sets {
        let labeled = features.apply(&data.labeled);
        let unlabeled = features.apply(&data.unlabeled);
        let test = features.apply(&data.test);
        let run = self_train(&cfg.model, &labeled, &unlabeled, None, &st, &cfg.train)?;
        let first = &run.stages[0].models;
        let last = run.final_models();

        let final_preds: Vec<Vec<_>> = last
            .iter()
            .map(|m| predict(m, &test).map(|p| p.into_iter().map(|r| r.label).collect()))
            .collect::<Result<_>>()?;
        let triples: Vec<VoteTriple> = test
            .samples()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                VoteTriple::new(
                    &s.id,
                    final_preds[0][i],
                    final_preds[1][i],
                    final_preds[2][i],
                )
            })
            .collect();

        for &model in &cfg.grid.models {
            let k = Architecture::ALL
                .iter()
                .position(|&a| a == model)
                .expect("known architecture");
            let mut f1 = Vec::with_capacity(cfg.grid.strategies.len());
            for &s in &cfg.grid.strategies {
                f1.push(match s {
                    Strategy::N => score(&first[k], &test)?,
                    Strategy::P => f1_from_labels(&final_preds[k], &truths)?.weighted,
                    Strategy::PV => {
                        let voted = vote_all(&triples, &column_vote(&cfg.vote, model))?;
                        let by_id: std::collections::HashMap<&str, _> = voted
                            .labels
                            .iter()
                            .map(|(id, l)| (id.as_str(), *l))
                            .collect();
                        let preds: Vec<_> = test
                            .samples()
                            .iter()
                            .map(|s| by_id[s.id.as_str()])
                            .collect();
                        f1_from_labels(&preds, &truths)?.weighted
                    }
                });
            }
            rows.push(AblationRow {
                model,
                features: features.clone(),
                f1,
            });
        }
    }
    Ok(AblationTable {
        strategies: cfg.grid.strategies.clone(),
        rows,
    })
}

/// Labeled / unlabeled / test fractions of the reference benchmark: 20% of
/// the training pool is labeled and 80% unlabeled, with a further 20% of all
/// samples held out.
pub const REFERENCE_SPLIT: [f64; 3] = [0.16, 0.64, 0.20];

/// The reference synthetic benchmark: the default generator (reference class
/// counts, noise 0.3) split by [`REFERENCE_SPLIT`] with the middle part's
/// labels removed.
pub fn reference_benchmark(spec: &SyntheticSpec) -> Result<AblationData> {
    let data = generate_synthetic(spec)?;
    let s = split(&data, REFERENCE_SPLIT, spec.seed)?;
    Ok(AblationData {
        labeled: s.train,
        unlabeled: s.val.without_labels(),
        test: s.test,
    })
}
