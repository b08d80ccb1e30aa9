use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::{init_attention, init_layer_norm, init_linear, linear, multi_head_self_attention};
use super::{AttentionParams, Bound, Dropout, ParamSet};

const LN_EPS: f64 = 1e-5;

/// One context-based transformer block: pre-norm self-attention and a GELU
/// feed-forward layer, each wrapped in a residual connection.
#[derive(Debug, Clone)]
pub struct CbtBlockParams {
    pub attn: AttentionParams,
    pub ln1: (Var, Var),
    pub ln2: (Var, Var),
    prefix: String,
    pub d_ff: usize,
}

impl CbtBlockParams {
    pub fn bind(
        p: &Bound,
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
    ) -> Result<Self> {
        if d_ff < d_model {
            return Err(Error::InvalidParameter(format!(
                "d_ff {d_ff} must be at least d_model {d_model}"
            )));
        }
        Ok(Self {
            attn: AttentionParams::bind(p, &format!("{prefix}.attn"), d_model, n_heads)?,
            ln1: (
                p.get(&format!("{prefix}.ln1.gamma"))?,
                p.get(&format!("{prefix}.ln1.beta"))?,
            ),
            ln2: (
                p.get(&format!("{prefix}.ln2.gamma"))?,
                p.get(&format!("{prefix}.ln2.beta"))?,
            ),
            prefix: prefix.to_string(),
            d_ff,
        })
    }
}

pub fn init_cbt(
    set: &mut ParamSet,
    prefix: &str,
    d_model: usize,
    n_heads: usize,
    d_ff: usize,
    rng: &mut SplitMix64,
) -> Result<()> {
    if d_ff < d_model {
        return Err(Error::InvalidParameter(format!(
            "d_ff {d_ff} must be at least d_model {d_model}"
        )));
    }
    init_attention(set, &format!("{prefix}.attn"), d_model, n_heads, rng)?;
    init_layer_norm(set, &format!("{prefix}.ln1"), d_model);
    init_layer_norm(set, &format!("{prefix}.ln2"), d_model);
    init_linear(set, &format!("{prefix}.ff1"), d_model, d_ff, rng);
    init_linear(set, &format!("{prefix}.ff2"), d_ff, d_model, rng);
    // Both residual branches start at zero so a fresh block is the identity.
    *set.get_mut(&format!("{prefix}.attn.wo"))? = Tensor::zeros(&[d_model, d_model]);
    *set.get_mut(&format!("{prefix}.ff2.w"))? = Tensor::zeros(&[d_ff, d_model]);
    Ok(())
}

/// `h = x + MHSA(LN1(x))`, `out = h + FFN(LN2(h))` over sequences of `seq`
/// rows. Output shape equals input shape. `drop` acts on both residual
/// branches before they are added back.
pub fn cbt_forward(
    tape: &mut Tape,
    x: Var,
    bp: &Bound,
    p: &CbtBlockParams,
    seq: usize,
    drop: &mut Dropout,
) -> Result<Var> {
    let n1 = tape.layer_norm(x, p.ln1.0, p.ln1.1, LN_EPS)?;
    let a = multi_head_self_attention(tape, n1, &p.attn, seq)?;
    let a = drop.apply(tape, a)?;
    let h = tape.add(x, a)?;
    let n2 = tape.layer_norm(h, p.ln2.0, p.ln2.1, LN_EPS)?;
    let f = linear(tape, bp, &format!("{}.ff1", p.prefix), n2)?;
    let f = tape.gelu(f)?;
    let f = linear(tape, bp, &format!("{}.ff2", p.prefix), f)?;
    let f = drop.apply(tape, f)?;
    tape.add(h, f)
}
