use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::nn::{
    amf_mask, cbt_forward, init_cbt, init_layer_norm, init_linear, linear, AmfParams, Bound,
    CbtBlockParams, Dropout, ParamSet,
};
use crate::rng::SplitMix64;
use crate::NUM_CLASSES;

use super::{BatchInputs, ModelConfig};

/// Each stream sequence is `[audio token, other token]`.
const SEQ: usize = 2;
const LN_EPS: f64 = 1e-5;

pub(super) fn init(set: &mut ParamSet, c: &ModelConfig, rng: &mut SplitMix64) -> Result<()> {
    init_linear(set, "proj_a", c.widths.audio, c.d_model, rng);
    init_linear(set, "proj_v", c.widths.video, c.d_model, rng);
    init_linear(set, "proj_t", c.widths.text, c.d_model, rng);
    for stream in ["cbt_av", "cbt_at"] {
        for l in 0..c.n_layers {
            init_cbt(
                set,
                &format!("{stream}.{l}"),
                c.d_model,
                c.n_heads,
                c.d_ff,
                rng,
            )?;
        }
    }
    init_layer_norm(set, "ln_f", c.d_model);
    init_linear(set, "head", c.d_model, NUM_CLASSES, rng);
    Ok(())
}

fn stream(
    tape: &mut Tape,
    p: &Bound,
    c: &ModelConfig,
    name: &str,
    lead: Var,
    other: Var,
    drop: &mut Dropout,
) -> Result<Var> {
    let mut x = tape.interleave_rows(&[lead, other])?;
    for l in 0..c.n_layers {
        let prefix = format!("{name}.{l}");
        let block = CbtBlockParams::bind(p, &prefix, c.d_model, c.n_heads, c.d_ff)?;
        x = cbt_forward(tape, x, p, &block, SEQ, drop)?;
    }
    tape.group_mean_rows(x, SEQ)
}

pub(super) fn forward(
    tape: &mut Tape,
    p: &Bound,
    c: &ModelConfig,
    x: BatchInputs,
    drop: &mut Dropout,
) -> Result<Var> {
    let a = linear(tape, p, "proj_a", x.audio)?;
    let v = linear(tape, p, "proj_v", x.video)?;
    let t = linear(tape, p, "proj_t", x.text)?;
    let (a, v, t) = (
        drop.apply(tape, a)?,
        drop.apply(tape, v)?,
        drop.apply(tape, t)?,
    );
    let s_av = stream(tape, p, c, "cbt_av", a, v, drop)?;
    let s_at = stream(tape, p, c, "cbt_at", a, t, drop)?;

    // The gate is a hard 0/1 decision taken on forward values; gradients
    // flow through the kept streams only.
    let gate = AmfParams::new(c.theta_sim)?;
    let (rows_av, rows_at) = (tape.value(s_av).clone(), tape.value(s_at).clone());
    let d = rows_av.last_dim();
    let mut keep_av = Vec::with_capacity(rows_av.numel() / d);
    let mut keep_at = Vec::with_capacity(keep_av.capacity());
    for (ra, rt) in rows_av.data().chunks(d).zip(rows_at.data().chunks(d)) {
        let mask = amf_mask(&[ra, rt], &gate)?;
        keep_av.push(f64::from(mask[0]));
        keep_at.push(f64::from(mask[1]));
    }
    let g_av = tape.scale_rows(s_av, keep_av)?;
    let g_at = tape.scale_rows(s_at, keep_at)?;
    let fused = tape.add(g_av, g_at)?;
    let fused = tape.layer_norm(fused, p.get("ln_f.gamma")?, p.get("ln_f.beta")?, LN_EPS)?;
    let fused = drop.apply(tape, fused)?;
    linear(tape, p, "head", fused)
}
