use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::{Bound, ParamSet};
use crate::autodiff::Tensor;

/// Per-head query/key/value projections `[d_model, d_model / n_heads]` and
/// the output projection `[d_model, d_model]`, bound on a tape.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub wq: Vec<Var>,
    pub wk: Vec<Var>,
    pub wv: Vec<Var>,
    pub wo: Var,
    pub d_model: usize,
    pub n_heads: usize,
}

impl AttentionParams {
    pub fn bind(p: &Bound, prefix: &str, d_model: usize, n_heads: usize) -> Result<Self> {
        check_heads(d_model, n_heads)?;
        let heads = |kind: &str| -> Result<Vec<Var>> {
            (0..n_heads)
                .map(|h| p.get(&format!("{prefix}.{kind}.{h}")))
                .collect()
        };
        Ok(Self {
            wq: heads("wq")?,
            wk: heads("wk")?,
            wv: heads("wv")?,
            wo: p.get(&format!("{prefix}.wo"))?,
            d_model,
            n_heads,
        })
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    fn validate(&self, tape: &Tape) -> Result<()> {
        let dh = self.d_head();
        let heads = self.wq.iter().chain(&self.wk).chain(&self.wv);
        for &w in heads {
            if tape.value(w).shape() != [self.d_model, dh] {
                return Err(Error::dim(
                    "attention",
                    format!(
                        "head projection {:?}, expected [{}, {dh}]",
                        tape.value(w).shape(),
                        self.d_model
                    ),
                ));
            }
        }
        if tape.value(self.wo).shape() != [self.d_model, self.d_model] {
            return Err(Error::dim(
                "attention",
                format!("output projection {:?}", tape.value(self.wo).shape()),
            ));
        }
        Ok(())
    }
}

fn check_heads(d_model: usize, n_heads: usize) -> Result<()> {
    if n_heads == 0 || d_model % n_heads != 0 {
        return Err(Error::InvalidParameter(format!(
            "d_model {d_model} is not divisible by n_heads {n_heads}"
        )));
    }
    Ok(())
}

pub fn init_attention(
    set: &mut ParamSet,
    prefix: &str,
    d_model: usize,
    n_heads: usize,
    rng: &mut SplitMix64,
) -> Result<()> {
    check_heads(d_model, n_heads)?;
    let dh = d_model / n_heads;
    let std = (1.0 / d_model as f64).sqrt();
    for kind in ["wq", "wk", "wv"] {
        for h in 0..n_heads {
            set.insert(
                format!("{prefix}.{kind}.{h}"),
                Tensor::randn(&[d_model, dh], std, rng),
            );
        }
    }
    set.insert(
        format!("{prefix}.wo"),
        Tensor::randn(&[d_model, d_model], std, rng),
    );
    Ok(())
}

/// Multi-head self-attention over `x` of shape `[groups * seq, d_model]`,
/// where each consecutive block of `seq` rows is one sequence. Scores are
/// scaled by `1 / sqrt(d_model / n_heads)`; no positional encoding.
pub fn multi_head_self_attention(
    tape: &mut Tape,
    x: Var,
    p: &AttentionParams,
    seq: usize,
) -> Result<Var> {
    p.validate(tape)?;
    match tape.value(x).shape() {
        [rows, d] if *d == p.d_model && seq >= 1 && rows % seq == 0 => {}
        s => {
            return Err(Error::dim(
                "attention",
                format!(
                    "input {s:?} vs d_model {} and sequence length {seq}",
                    p.d_model
                ),
            ))
        }
    }
    let scale = 1.0 / (p.d_head() as f64).sqrt();
    let mut heads = Vec::with_capacity(p.n_heads);
    for h in 0..p.n_heads {
        let q = tape.matmul(x, p.wq[h])?;
        let k = tape.matmul(x, p.wk[h])?;
        let v = tape.matmul(x, p.wv[h])?;
        heads.push(tape.attention(q, k, v, seq, scale)?);
    }
    let cat = tape.concat_cols(&heads)?;
    tape.matmul(cat, p.wo)
}
