//! Video/text embedding alignment with a temperature-scaled contrastive
//! objective.
//!
//! For a batch of paired rows, with `s_ij = cos(v_i, t_j)`:
//!
//! ```text
//! L = -Σ_i log( exp(s_ii / τ) / Σ_j exp(s_ij / τ) )
//! ```

use rand::seq::SliceRandom;

use crate::autodiff::{adam_step, AdamConfig, AdamState, Reduction, Tape, Tensor, Var};
use crate::data::{Dataset, Modality};
use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::rng::SplitMix64;

use super::TrainConfig;

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be > 0, got {tau}"
        )));
    }
    Ok(())
}

/// Record the contrastive loss of row-normalised `v[b, d]` and `t[b, d]`.
pub fn contrastive_loss(tape: &mut Tape, v: Var, t: Var, tau: f64) -> Result<Var> {
    check_tau(tau)?;
    let (vs, ts) = (
        tape.value(v).shape().to_vec(),
        tape.value(t).shape().to_vec(),
    );
    if vs.len() != 2 || vs != ts {
        return Err(Error::dim(
            "contrastive_loss",
            format!("v {vs:?} and t {ts:?} must be equal 2-D shapes"),
        ));
    }
    let tt = tape.transpose(t)?;
    let sims = tape.matmul(v, tt)?;
    let scaled = tape.scale(sims, 1.0 / tau)?;
    let diag: Vec<usize> = (0..vs[0]).collect();
    tape.cross_entropy(scaled, &diag, Reduction::Sum)
}

/// Loss value for already normalised rows.
pub fn contrastive_loss_value(v: &Tensor, t: &Tensor, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let (v, t) = (tape.constant(v.clone()), tape.constant(t.clone()));
    let l = contrastive_loss(&mut tape, v, t, tau)?;
    Ok(tape.value(l).item())
}

/// Linear projections of video and text embeddings into a shared space,
/// L2-normalised before comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentHead {
    pub d_video: usize,
    pub d_text: usize,
    pub d_align: usize,
    pub tau: f64,
    pub params: ParamSet,
}

impl AlignmentHead {
    pub fn new(d_video: usize, d_text: usize, d_align: usize, tau: f64, seed: u64) -> Result<Self> {
        check_tau(tau)?;
        if d_video == 0 || d_text == 0 || d_align == 0 {
            return Err(Error::InvalidParameter(
                "alignment widths must be positive".into(),
            ));
        }
        let mut rng = SplitMix64::new(SplitMix64::derive(seed, &[0x414c_4947]));
        let mut params = ParamSet::new();
        params.insert(
            "proj_v",
            Tensor::randn(&[d_video, d_align], (1.0 / d_video as f64).sqrt(), &mut rng),
        );
        params.insert(
            "proj_t",
            Tensor::randn(&[d_text, d_align], (1.0 / d_text as f64).sqrt(), &mut rng),
        );
        Ok(Self {
            d_video,
            d_text,
            d_align,
            tau,
            params,
        })
    }

    /// Record the loss for a batch of paired video `[b, d_video]` and text
    /// `[b, d_text]` rows.
    pub fn loss(
        &self,
        tape: &mut Tape,
        bound: &crate::nn::Bound,
        video: Var,
        text: Var,
    ) -> Result<Var> {
        let pv = tape.matmul(video, bound.get("proj_v")?)?;
        let pt = tape.matmul(text, bound.get("proj_t")?)?;
        let nv = tape.l2_normalize_rows(pv)?;
        let nt = tape.l2_normalize_rows(pt)?;
        contrastive_loss(tape, nv, nt, self.tau)
    }

    /// Normalised embeddings of video rows.
    pub fn embed_video(&self, video: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(video.clone());
        let w = tape.constant(self.params.get("proj_v")?.clone());
        let p = tape.matmul(x, w)?;
        let n = tape.l2_normalize_rows(p)?;
        Ok(tape.value(n).clone())
    }
}

/// Train the head on the video/text pairs of `data` (labels unused).
/// Returns the mean per-sample loss of each epoch.
pub fn train_alignment(
    head: &mut AlignmentHead,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Data("alignment training set is empty".into()));
    }
    let w = data.widths();
    if w.video != head.d_video || w.text != head.d_text {
        return Err(Error::dim(
            "train_alignment",
            format!(
                "data widths {w:?} vs head ({}, {})",
                head.d_video, head.d_text
            ),
        ));
    }
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&head.params.iter().map(|(_, t)| t).collect::<Vec<_>>());
    let mut rng = SplitMix64::new(SplitMix64::derive(cfg.seed, &[0x414c_4e53]));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size.max(2)) {
            let rows = |m: Modality| -> Result<Tensor> {
                let flat: Vec<f64> = batch
                    .iter()
                    .flat_map(|&i| data.samples()[i].modality(m).iter().copied())
                    .collect();
                Tensor::matrix(batch.len(), w.of(m), flat)
            };
            let v = rows(Modality::Video)?;
            let t = rows(Modality::Text)?;
            let mut tape = Tape::new();
            let bound = head.params.bind(&mut tape, true);
            let (v, t) = (tape.constant(v), tape.constant(t));
            let loss = head.loss(&mut tape, &bound, v, t)?;
            total += tape.value(loss).item();
            tape.backward(loss)?;
            let grads: Vec<Tensor> = bound
                .iter()
                .map(|(_, var)| {
                    tape.grad(var)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(tape.value(var).shape()))
                })
                .collect();
            let refs: Vec<&Tensor> = grads.iter().collect();
            let mut params: Vec<&mut Tensor> = head.params.values_mut().collect();
            adam_step(&mut params, &refs, &mut state, &adam)?;
        }
        curve.push(total / data.len() as f64);
    }
    Ok(curve)
}
