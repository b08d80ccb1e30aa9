//! Randomized finite-difference cases shared by the gradient suite and the
//! acceptance run. Every case draws its shapes and inputs from a seed.

use agtfuse_core::autodiff::{check_gradients, GradCheck, Reduction};
use agtfuse_core::data::{Sample, Widths};
use agtfuse_core::models::{contrastive_loss, BatchInputs};
use agtfuse_core::nn::{
    cbt_forward, init_attention, init_cbt, multi_head_self_attention, AttentionParams, Bound,
    CbtBlockParams, Dropout, ParamSet,
};
use agtfuse_core::{
    Architecture, EmotionLabel, Model, ModelConfig, Result, SplitMix64, Tape, Tensor, Var,
};

pub const TOL: f64 = 1e-4;
pub const SEEDS: u64 = 20;

pub type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;
pub type Case = fn(&mut SplitMix64, u64) -> (Vec<Tensor>, Build);

pub fn randn(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

/// A dimension in `1..=max`.
pub fn dims(rng: &mut SplitMix64, max: usize) -> usize {
    1 + (rng.next_unit() * max as f64) as usize % max
}

/// Reduce `out` to a scalar against fixed random weights so every output
/// element gets its own gradient.
pub fn reduce(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let w = Tensor::randn(&shape, 1.0, &mut SplitMix64::new(seed ^ 0xfeed));
    tape.weighted_sum(out, w)
}

pub fn rel_err<F>(inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    check_gradients(inputs, build, GradCheck::default())
        .unwrap()
        .max_rel_err
}

/// Largest relative error of `case` over all seeds, with the seed that
/// produced it.
pub fn worst(case: Case) -> (f64, u64) {
    (0..SEEDS)
        .map(|seed| {
            let mut rng = SplitMix64::new(seed + 100);
            let (inputs, build) = case(&mut rng, seed);
            (rel_err(&inputs, build), seed)
        })
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
}

/// Like [`worst`] for cases indexed by seed alone.
pub fn worst_by_seed(f: impl Fn(u64) -> f64) -> (f64, u64) {
    (0..SEEDS)
        .map(|s| (f(s), s))
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
}

fn matmul(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let (m, k, n) = (dims(rng, 4), dims(rng, 5), dims(rng, 4));
    let inputs = vec![randn(&[m, k], rng), randn(&[k, n], rng)];
    (
        inputs,
        Box::new(move |t, v| {
            let c = t.matmul(v[0], v[1])?;
            reduce(t, c, seed)
        }),
    )
}

fn elementwise(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let shape = [dims(rng, 4), dims(rng, 5)];
    let inputs = vec![randn(&shape, rng), randn(&shape, rng), randn(&shape, rng)];
    (
        inputs,
        Box::new(move |t, v| {
            let a = t.add(v[0], v[1])?;
            let s = t.sub(a, v[2])?;
            let m = t.mul(s, v[0])?;
            reduce(t, m, seed)
        }),
    )
}

fn add_row_and_scales(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let (r, c) = (dims(rng, 5), dims(rng, 4));
    let factors: Vec<f64> = (0..r).map(|_| rng.next_unit() * 4.0 - 2.0).collect();
    let inputs = vec![randn(&[r, c], rng), randn(&[c], rng)];
    (
        inputs,
        Box::new(move |t, v| {
            let x = t.add_row(v[0], v[1])?;
            let x = t.scale(x, -1.7)?;
            let x = t.scale_rows(x, factors.clone())?;
            reduce(t, x, seed)
        }),
    )
}

fn gelu(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let inputs = vec![Tensor::randn(&[dims(rng, 6), dims(rng, 6)], 2.0, rng)];
    (
        inputs,
        Box::new(move |t, v| {
            let y = t.gelu(v[0])?;
            reduce(t, y, seed)
        }),
    )
}

fn transpose_reshape(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let (r, c) = (dims(rng, 4), dims(rng, 4));
    let inputs = vec![randn(&[r, c], rng)];
    (
        inputs,
        Box::new(move |t, v| {
            let x = t.transpose(v[0])?;
            let x = t.reshape(x, vec![r * c])?;
            let x = t.reshape(x, vec![1, r * c])?;
            reduce(t, x, seed)
        }),
    )
}

fn softmax(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let shape = [dims(rng, 3), dims(rng, 3), 1 + dims(rng, 4)];
    let axis = seed as usize % 3;
    let inputs = vec![Tensor::randn(&shape, 2.0, rng)];
    (
        inputs,
        Box::new(move |t, v| {
            let y = t.softmax(v[0], axis)?;
            reduce(t, y, seed)
        }),
    )
}

fn layer_norm(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let (r, d) = (dims(rng, 4), 2 + dims(rng, 7));
    let inputs = vec![randn(&[r, d], rng), randn(&[d], rng), randn(&[d], rng)];
    (
        inputs,
        Box::new(move |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
            reduce(t, y, seed)
        }),
    )
}

fn cross_entropy(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let b = dims(rng, 5);
    let labels: Vec<usize> = (0..b)
        .map(|_| (rng.next_unit() * 6.0) as usize % 6)
        .collect();
    let red = if seed % 2 == 0 {
        Reduction::Mean
    } else {
        Reduction::Sum
    };
    let inputs = vec![Tensor::randn(&[b, 6], 2.0, rng)];
    (
        inputs,
        Box::new(move |t, v| t.cross_entropy(v[0], &labels, red)),
    )
}

fn attention(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let (groups, seq, d) = (dims(rng, 2), dims(rng, 3), dims(rng, 4));
    let n = groups * seq;
    let inputs = vec![
        randn(&[n, d], rng),
        randn(&[n, d], rng),
        randn(&[n, d], rng),
    ];
    let scale = 1.0 / (d as f64).sqrt();
    (
        inputs,
        Box::new(move |t, v| {
            let y = t.attention(v[0], v[1], v[2], seq, scale)?;
            reduce(t, y, seed)
        }),
    )
}

fn row_plumbing(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let (b, d) = (dims(rng, 3), dims(rng, 4));
    let inputs = vec![randn(&[b, d], rng), randn(&[b, d], rng)];
    (
        inputs,
        Box::new(move |t, v| {
            let cat = t.concat_cols(&[v[0], v[1]])?;
            let inter = t.interleave_rows(&[v[0], v[1]])?;
            let pooled = t.group_mean_rows(inter, 2)?;
            let both = t.concat_cols(&[cat, pooled])?;
            let s = t.sum(both)?;
            let r = reduce(t, both, seed)?;
            let s = t.scale(s, 0.5)?;
            t.add(r, s)
        }),
    )
}

fn l2_normalize_rows(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let inputs = vec![randn(&[dims(rng, 4), 1 + dims(rng, 5)], rng)];
    (
        inputs,
        Box::new(move |t, v| {
            let y = t.l2_normalize_rows(v[0])?;
            reduce(t, y, seed)
        }),
    )
}

fn contrastive(rng: &mut SplitMix64, seed: u64) -> (Vec<Tensor>, Build) {
    let (b, d) = (1 + dims(rng, 4), 1 + dims(rng, 5));
    let tau = [0.07, 0.5, 1.0][seed as usize % 3];
    let inputs = vec![randn(&[b, d], rng), randn(&[b, d], rng)];
    (
        inputs,
        Box::new(move |t, v| contrastive_loss(t, v[0], v[1], tau)),
    )
}

/// linear -> layer_norm -> softmax -> cross-entropy.
fn chain(rng: &mut SplitMix64, _seed: u64) -> (Vec<Tensor>, Build) {
    let (b, k) = (dims(rng, 4), dims(rng, 5));
    let labels: Vec<usize> = (0..b).map(|i| i % 6).collect();
    let inputs = vec![
        randn(&[b, k], rng),
        randn(&[k, 6], rng),
        randn(&[6], rng),
        randn(&[6], rng),
        randn(&[6], rng),
    ];
    (
        inputs,
        Box::new(move |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.add_row(h, v[2])?;
            let h = t.layer_norm(h, v[3], v[4], 1e-5)?;
            let p = t.softmax(h, 1)?;
            let p = t.scale(p, 3.0)?;
            t.cross_entropy(p, &labels, Reduction::Mean)
        }),
    )
}

pub const OP_CASES: &[(&str, Case)] = &[
    ("matmul", matmul),
    ("add/sub/mul", elementwise),
    ("add_row/scale/scale_rows", add_row_and_scales),
    ("gelu", gelu),
    ("transpose/reshape", transpose_reshape),
    ("softmax", softmax),
    ("layer_norm", layer_norm),
    ("cross_entropy", cross_entropy),
    ("attention", attention),
    ("concat/interleave/group_mean/sum", row_plumbing),
    ("l2_normalize_rows", l2_normalize_rows),
    ("contrastive_loss", contrastive),
    ("linear-layer_norm-softmax-ce chain", chain),
];

// Not every test target looks cases up by name.
#[allow(dead_code)]
pub fn case(name: &str) -> Case {
    OP_CASES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| *c)
        .unwrap_or_else(|| panic!("no case {name}"))
}

fn bind_named(names: &[String], vars: &[Var]) -> Bound {
    names.iter().cloned().zip(vars.iter().copied()).collect()
}

/// Every parameter redrawn so no branch starts at zero.
fn randomized(set: &ParamSet, rng: &mut SplitMix64) -> (Vec<String>, Vec<Tensor>) {
    set.iter()
        .map(|(n, t)| (n.to_string(), Tensor::randn(t.shape(), 0.5, rng)))
        .unzip()
}

pub fn mhsa(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed + 300);
    let (d, heads) = if seed % 2 == 0 { (8, 2) } else { (6, 3) };
    let seq = 1 + seed as usize % 3;
    let mut set = ParamSet::new();
    init_attention(&mut set, "att", d, heads, &mut rng).unwrap();
    let (names, mut inputs) = randomized(&set, &mut rng);
    inputs.push(randn(&[2 * seq, d], &mut rng));
    let n = names.len();
    rel_err(&inputs, |t, v| {
        let bp = bind_named(&names, &v[..n]);
        let p = AttentionParams::bind(&bp, "att", d, heads)?;
        let y = multi_head_self_attention(t, v[n], &p, seq)?;
        reduce(t, y, seed)
    })
}

pub fn cbt(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed + 500);
    let d_ff = 8 + 4 * (seed as usize % 3);
    let mut set = ParamSet::new();
    init_cbt(&mut set, "cbt", 8, 2, d_ff, &mut rng).unwrap();
    let (names, mut inputs) = randomized(&set, &mut rng);
    inputs.push(randn(&[2 * (1 + seed as usize % 2), 8], &mut rng));
    let n = names.len();
    rel_err(&inputs, |t, v| {
        let bp = bind_named(&names, &v[..n]);
        let p = CbtBlockParams::bind(&bp, "cbt", 8, 2, d_ff)?;
        let y = cbt_forward(t, v[n], &bp, &p, 2, &mut Dropout::off())?;
        reduce(t, y, seed)
    })
}

/// Mean cross-entropy of a tiny randomized model against all of its
/// parameters. Odd seeds run with a fixed dropout mask.
pub fn model(arch: Architecture, seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed + 900);
    let w = Widths {
        audio: 3 + seed as usize % 3,
        video: 2 + seed as usize % 4,
        text: 4,
    };
    let cfg = ModelConfig {
        widths: w,
        d_model: 8,
        n_heads: 2,
        d_ff: 8,
        n_layers: 1,
        hidden: 6,
        theta_sim: -1.0,
        dropout: 0.2,
    };
    let model = Model::new(arch, cfg, seed).unwrap();
    let (names, inputs) = randomized(&model.params, &mut rng);
    let samples: Vec<Sample> = (0..2 + seed as usize % 2)
        .map(|i| Sample {
            id: format!("s{i}"),
            audio: randn(&[w.audio], &mut rng).into_data(),
            video: randn(&[w.video], &mut rng).into_data(),
            text: randn(&[w.text], &mut rng).into_data(),
            label: Some(EmotionLabel::ALL[(i * 5 + 1) % 6]),
        })
        .collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.label.unwrap().index()).collect();
    rel_err(&inputs, |t, v| {
        let bp = bind_named(&names, v);
        let x = BatchInputs::record(t, &refs)?;
        let mut drop = if seed % 2 == 1 {
            Dropout::training(0.2, seed)?
        } else {
            Dropout::off()
        };
        let logits = model.forward_with(t, &bp, x, &mut drop)?;
        t.cross_entropy(logits, &labels, Reduction::Mean)
    })
}
