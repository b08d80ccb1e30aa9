//! Regularized voting over the audio-only, baseline and AGT predictions.
//!
//! Triples without a sensitive label use a majority vote (a three-way tie
//! goes to the audio model). A triple containing a sensitive label is
//! resolved by one uniform draw: below `hubert_weight` picks the audio
//! prediction, the next `companion_split[0]` picks the baseline, and the rest
//! picks the AGT.
//!
//! The generator is [`SplitMix64`] seeded with `seed`, consumed once per
//! sensitive triple in id-sorted order, with `u = (next >> 11) * 2^-53`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::EmotionLabel;
use crate::error::{Error, Result};
use crate::io::{read_jsonl_records, write_jsonl_records};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VoteConfig {
    pub hubert_weight: f64,
    /// Probabilities of picking the baseline and the AGT.
    pub companion_split: [f64; 2],
    pub sensitive_labels: Vec<EmotionLabel>,
    pub seed: u64,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            hubert_weight: 0.8,
            companion_split: [0.1, 0.1],
            sensitive_labels: vec![EmotionLabel::Worry, EmotionLabel::Sad],
            seed: 0,
        }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.hubert_weight,
            self.companion_split[0],
            self.companion_split[1],
        ];
        if w.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "vote weights must be non-negative, got {w:?}"
            )));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "vote weights must sum to 1, got {total}"
            )));
        }
        Ok(())
    }

    pub fn is_sensitive(&self, label: EmotionLabel) -> bool {
        self.sensitive_labels.contains(&label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTriple {
    pub id: String,
    pub audio: EmotionLabel,
    pub baseline: EmotionLabel,
    pub agt: EmotionLabel,
}

impl VoteTriple {
    pub fn new(
        id: impl Into<String>,
        audio: EmotionLabel,
        baseline: EmotionLabel,
        agt: EmotionLabel,
    ) -> Self {
        Self {
            id: id.into(),
            audio,
            baseline,
            agt,
        }
    }

    fn voter(&self, v: Voter) -> EmotionLabel {
        match v {
            Voter::Audio => self.audio,
            Voter::Baseline => self.baseline,
            Voter::Agt => self.agt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Voter {
    Audio,
    Baseline,
    Agt,
}

impl Voter {
    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Majority,
    Probabilistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub label: EmotionLabel,
    pub branch: Branch,
    /// The model whose prediction was taken. In the majority branch this is
    /// the first model (audio, baseline, agt order) holding the winning label.
    pub voter: Voter,
}

pub fn vote_one(t: &VoteTriple, cfg: &VoteConfig, rng: &mut SplitMix64) -> Decision {
    let sensitive = [t.audio, t.baseline, t.agt]
        .iter()
        .any(|&l| cfg.is_sensitive(l));
    if sensitive {
        let u = rng.next_unit();
        let voter = if u < cfg.hubert_weight {
            Voter::Audio
        } else if u < cfg.hubert_weight + cfg.companion_split[0] {
            Voter::Baseline
        } else {
            Voter::Agt
        };
        return Decision {
            label: t.voter(voter),
            branch: Branch::Probabilistic,
            voter,
        };
    }
    let voter = if t.baseline == t.agt && t.audio != t.baseline {
        Voter::Baseline
    } else {
        Voter::Audio
    };
    Decision {
        label: t.voter(voter),
        branch: Branch::Majority,
        voter,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BranchReport {
    pub total: usize,
    pub majority: usize,
    pub probabilistic: usize,
    pub three_way_ties: usize,
    /// How often each model's prediction was taken, overall
    /// (audio, baseline, agt).
    pub selected: [usize; 3],
    /// Same, restricted to the probabilistic branch.
    pub selected_probabilistic: [usize; 3],
}

impl BranchReport {
    pub fn rng_draws(&self) -> usize {
        self.probabilistic
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,count,fraction\n");
        let frac = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let mut row = |name: &str, n: usize, d: usize| {
            let _ = writeln!(out, "{name},{n},{:.4}", frac(n, d));
        };
        row("total", self.total, self.total);
        row("majority", self.majority, self.total);
        row("probabilistic", self.probabilistic, self.total);
        row("three_way_tie", self.three_way_ties, self.total);
        for (name, i) in [("audio", 0), ("baseline", 1), ("agt", 2)] {
            row(&format!("selected_{name}"), self.selected[i], self.total);
        }
        for (name, i) in [("audio", 0), ("baseline", 1), ("agt", 2)] {
            row(
                &format!("probabilistic_selected_{name}"),
                self.selected_probabilistic[i],
                self.probabilistic,
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteOutcome {
    /// Final labels in id-sorted order.
    pub labels: Vec<(String, EmotionLabel)>,
    pub report: BranchReport,
}

#[derive(Serialize)]
struct LabelLine<'a> {
    id: &'a str,
    label: EmotionLabel,
}

impl VoteOutcome {
    pub fn write_labels(&self, path: &Path) -> Result<()> {
        let lines: Vec<LabelLine> = self
            .labels
            .iter()
            .map(|(id, label)| LabelLine { id, label: *label })
            .collect();
        write_jsonl_records(path, &lines)
    }
}

pub fn vote_all(triples: &[VoteTriple], cfg: &VoteConfig) -> Result<VoteOutcome> {
    cfg.validate()?;
    let mut sorted: Vec<&VoteTriple> = triples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::IdMismatch(format!("duplicate id `{}`", w[0].id)));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let mut report = BranchReport {
        total: sorted.len(),
        ..Default::default()
    };
    let mut labels = Vec::with_capacity(sorted.len());
    for t in sorted {
        let d = vote_one(t, cfg, &mut rng);
        report.selected[d.voter.index()] += 1;
        match d.branch {
            Branch::Majority => {
                report.majority += 1;
                if t.audio != t.baseline && t.audio != t.agt && t.baseline != t.agt {
                    report.three_way_ties += 1;
                }
            }
            Branch::Probabilistic => {
                report.probabilistic += 1;
                report.selected_probabilistic[d.voter.index()] += 1;
            }
        }
        labels.push((t.id.clone(), d.label));
    }
    Ok(VoteOutcome { labels, report })
}

#[derive(Deserialize)]
struct IdLabel {
    id: String,
    label: EmotionLabel,
}

/// Read `(id, label)` pairs from any JSONL file whose lines carry `id` and
/// `label` fields (prediction files, pseudo-label files, voted labels and
/// labeled datasets). Other fields are ignored.
pub fn read_labels(path: &Path) -> Result<Vec<(String, EmotionLabel)>> {
    read_jsonl_records(path, |line, _| {
        let r: IdLabel = serde_json::from_str(line).map_err(|e| e.to_string())?;
        Ok((r.id, r.label))
    })
}

/// Join three `(id, label)` lists into triples. Every id must appear in all
/// three lists exactly once; otherwise the error lists the offending ids.
pub fn align_triples(
    audio: &[(String, EmotionLabel)],
    baseline: &[(String, EmotionLabel)],
    agt: &[(String, EmotionLabel)],
) -> Result<Vec<VoteTriple>> {
    let mut maps: Vec<BTreeMap<&str, EmotionLabel>> = Vec::with_capacity(3);
    for (name, list) in [("audio", audio), ("baseline", baseline), ("agt", agt)] {
        let mut m = BTreeMap::new();
        for (id, l) in list {
            if m.insert(id.as_str(), *l).is_some() {
                return Err(Error::IdMismatch(format!(
                    "duplicate id `{id}` in {name} predictions"
                )));
            }
        }
        maps.push(m);
    }
    let all: BTreeSet<&str> = maps.iter().flat_map(|m| m.keys().copied()).collect();
    let mut missing = Vec::new();
    for (name, m) in ["audio", "baseline", "agt"].iter().zip(&maps) {
        let gone: Vec<&str> = all
            .iter()
            .filter(|id| !m.contains_key(*id))
            .copied()
            .collect();
        if !gone.is_empty() {
            missing.push(format!("{name} is missing [{}]", gone.join(", ")));
        }
    }
    if !missing.is_empty() {
        return Err(Error::IdMismatch(missing.join("; ")));
    }
    Ok(all
        .into_iter()
        .map(|id| VoteTriple::new(id, maps[0][id], maps[1][id], maps[2][id]))
        .collect())
}
