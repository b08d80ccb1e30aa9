use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::nn::{init_linear, linear, Bound, Dropout, ParamSet};
use crate::rng::SplitMix64;
use crate::NUM_CLASSES;

use super::{BatchInputs, ModelConfig};

pub(super) fn init_audio_only(set: &mut ParamSet, c: &ModelConfig, rng: &mut SplitMix64) {
    init_linear(set, "mlp1", c.widths.audio, c.hidden, rng);
    init_linear(set, "mlp2", c.hidden, NUM_CLASSES, rng);
}

pub(super) fn audio_only_forward(
    tape: &mut Tape,
    p: &Bound,
    x: BatchInputs,
    drop: &mut Dropout,
) -> Result<Var> {
    let h = linear(tape, p, "mlp1", x.audio)?;
    let h = tape.gelu(h)?;
    let h = drop.apply(tape, h)?;
    linear(tape, p, "mlp2", h)
}

pub(super) fn init_baseline(set: &mut ParamSet, c: &ModelConfig, rng: &mut SplitMix64) {
    init_linear(set, "proj_a", c.widths.audio, c.d_model, rng);
    init_linear(set, "proj_v", c.widths.video, c.d_model, rng);
    init_linear(set, "proj_t", c.widths.text, c.d_model, rng);
    init_linear(set, "mlp1", 3 * c.d_model, c.hidden, rng);
    init_linear(set, "mlp2", c.hidden, NUM_CLASSES, rng);
}

/// Concatenate the three projected modalities and classify with an MLP.
pub(super) fn baseline_forward(
    tape: &mut Tape,
    p: &Bound,
    x: BatchInputs,
    drop: &mut Dropout,
) -> Result<Var> {
    let a = linear(tape, p, "proj_a", x.audio)?;
    let v = linear(tape, p, "proj_v", x.video)?;
    let t = linear(tape, p, "proj_t", x.text)?;
    let cat = tape.concat_cols(&[a, v, t])?;
    let cat = drop.apply(tape, cat)?;
    let h = linear(tape, p, "mlp1", cat)?;
    let h = tape.gelu(h)?;
    let h = drop.apply(tape, h)?;
    linear(tape, p, "mlp2", h)
}
