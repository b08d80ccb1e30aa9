use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;

use agtfuse_core::config::RunConfig;
use agtfuse_core::data::{generate_synthetic, read_jsonl, split, write_jsonl};
use agtfuse_core::eval::{
    ablation_run, distribution_report, f1_scores, reference_benchmark, AblationData, Averaging,
    PROBED_TEST_VALUES,
};
use agtfuse_core::io::write_atomic;
use agtfuse_core::models::{
    load_model, predict, read_predictions, save_model, train, write_predictions,
};
use agtfuse_core::semisup::{
    confidence_filter, intersect_pseudo_labels, self_train, write_pseudo_labels,
};
use agtfuse_core::vote::{align_triples, read_labels, vote_all};
use agtfuse_core::{Architecture, Error, Model, Result};

use crate::{Command, SeedArg};

pub fn run(cmd: Command, cfg: RunConfig) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a, cfg),
        Command::Train(a) => train_cmd(a, cfg),
        Command::Predict(a) => predict_cmd(a),
        Command::PseudoLabel(a) => pseudo_label(a, cfg),
        Command::SelfTrain(a) => self_train_cmd(a, cfg),
        Command::Vote(a) => vote_cmd(a, cfg),
        Command::Eval(a) => eval_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Ablate(a) => ablate_cmd(a, cfg),
    }
}

fn parse_list<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != N {
        return Err(format!(
            "expected {N} comma-separated numbers, got {}",
            parts.len()
        ));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|e| format!("`{p}`: {e}"))?;
    }
    Ok(out)
}

fn parse_fractions(s: &str) -> std::result::Result<[f64; 3], String> {
    parse_list::<3>(s)
}

fn parse_six(s: &str) -> std::result::Result<[f64; 6], String> {
    parse_list::<6>(s)
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    parse_list::<2>(s)
}

fn parse_counts(s: &str) -> std::result::Result<[usize; 6], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 6 {
        return Err(format!(
            "expected 6 comma-separated counts, got {}",
            parts.len()
        ));
    }
    let mut out = [0; 6];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|e| format!("`{p}`: {e}"))?;
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn required(flag: Option<PathBuf>, from_config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| from_config.clone()).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "--{name} is required (or set data.{name} in the config)"
        ))
    })
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Write the whole dataset to this JSONL file
    #[arg(long, value_name = "FILE", required_unless_present = "split_dir")]
    out: Option<PathBuf>,
    /// Also split the dataset and write labeled.jsonl, unlabeled.jsonl (labels removed) and test.jsonl here
    #[arg(long, value_name = "DIR")]
    split_dir: Option<PathBuf>,
    /// Labeled, unlabeled and test fractions used with --split-dir
    #[arg(long, value_name = "F,F,F", default_value = "0.16,0.64,0.2", value_parser = parse_fractions)]
    fractions: [f64; 3],
    /// Samples per class in label-code order (worry, happy, neutral, angry, surprise, sad) [default: 616,1038,1248,1208,190,730]
    #[arg(long, value_name = "N,N,N,N,N,N", value_parser = parse_counts)]
    counts: Option<[usize; 6]>,
    /// Embedding width of every modality [default: 64]
    #[arg(long)]
    width: Option<usize>,
    /// Standard deviation of the per-coordinate Gaussian noise [default: 0.3]
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Probability that one modality carries another class's prototype [default: 0.2]
    #[arg(long)]
    conflict_rate: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
}

fn gen_data(a: GenDataArgs, cfg: RunConfig) -> Result<()> {
    let mut spec = cfg.synthetic;
    if let Some(c) = a.counts {
        spec.counts = c;
    }
    if let Some(w) = a.width {
        spec.widths = agtfuse_core::Widths::uniform(w);
    }
    if let Some(s) = a.noise_sigma {
        spec.noise_sigma = s;
    }
    if let Some(r) = a.conflict_rate {
        spec.conflict_rate = r;
    }
    if let Some(s) = a.seed.seed {
        spec.seed = s;
    }
    let data = generate_synthetic(&spec)?;
    if let Some(out) = &a.out {
        write_jsonl(&data, out)?;
        println!("wrote {} samples to {}", data.len(), out.display());
    }
    if let Some(dir) = &a.split_dir {
        ensure_dir(dir)?;
        let parts = split(&data, a.fractions, spec.seed)?;
        write_jsonl(&parts.train, &dir.join("labeled.jsonl"))?;
        write_jsonl(&parts.val.without_labels(), &dir.join("unlabeled.jsonl"))?;
        write_jsonl(&parts.test, &dir.join("test.jsonl"))?;
        println!(
            "split into labeled {} / unlabeled {} / test {} under {}",
            parts.train.len(),
            parts.val.len(),
            parts.test.len(),
            dir.display()
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Architecture: audio, baseline or agt
    #[arg(long)]
    arch: Architecture,
    /// Labeled training data (JSONL)
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Where to write the model file
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write the per-epoch mean loss as CSV
    #[arg(long, value_name = "FILE")]
    loss_curve: Option<PathBuf>,
    /// Training epochs [default: 30]
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size [default: 32]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    lr: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
}

fn apply_train_flags(
    cfg: &mut RunConfig,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
) -> Result<()> {
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(l) = lr {
        cfg.train.lr = l;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.vote.seed = s;
        cfg.synthetic.seed = s;
    }
    cfg.validate()
}

fn train_cmd(a: TrainArgs, mut cfg: RunConfig) -> Result<()> {
    apply_train_flags(&mut cfg, a.epochs, a.batch_size, a.lr, a.seed.seed)?;
    let data = read_jsonl(&a.data)?;
    if data.is_empty() {
        return Err(Error::Data(format!(
            "{} holds no samples",
            a.data.display()
        )));
    }
    cfg.model.widths = data.widths();
    let mut model = Model::new(a.arch, cfg.model, cfg.train.seed)?;
    let curve = train(&mut model, &data, &cfg.train)?;
    save_model(&model, &a.out)?;
    if let Some(path) = &a.loss_curve {
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in curve.iter().enumerate() {
            let _ = writeln!(csv, "{},{l:.6}", i + 1);
        }
        write_text(path, &csv)?;
    }
    println!(
        "trained {} on {} samples; final loss {:.4}; wrote {}",
        model.arch,
        data.len(),
        curve.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Model file written by `train`
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Dataset to predict (labels are ignored)
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Prediction JSONL output
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = read_jsonl(&a.data)?;
    let preds = predict(&model, &data)?;
    write_predictions(&a.out, &preds)?;
    println!("wrote {} predictions to {}", preds.len(), a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct PseudoLabelArgs {
    /// Audio-only model predictions
    #[arg(long, value_name = "FILE")]
    audio: PathBuf,
    /// Baseline model predictions
    #[arg(long, value_name = "FILE")]
    baseline: PathBuf,
    /// AGT model predictions
    #[arg(long, value_name = "FILE")]
    agt: PathBuf,
    /// Keep predictions whose confidence is strictly above this value [default: 0.9]
    #[arg(long)]
    threshold: Option<f64>,
    /// Pseudo-label JSONL output
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn pseudo_label(a: PseudoLabelArgs, cfg: RunConfig) -> Result<()> {
    let threshold = a.threshold.unwrap_or(cfg.semisup.threshold);
    let mut sets = Vec::with_capacity(3);
    for (name, path) in [
        ("audio", &a.audio),
        ("baseline", &a.baseline),
        ("agt", &a.agt),
    ] {
        let preds = read_predictions(path)?;
        let kept = confidence_filter(&preds, threshold, name)?;
        println!(
            "{name}: {} of {} above {threshold}",
            kept.len(),
            preds.len()
        );
        sets.push(kept);
    }
    let sets: [_; 3] = sets.try_into().expect("three sets");
    let out = intersect_pseudo_labels(&sets)?;
    write_pseudo_labels(&a.out, &out)?;
    println!(
        "{} pseudo-labels agreed by all three; wrote {}",
        out.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct SelfTrainArgs {
    /// Labeled data [default: data.labeled from the config]
    #[arg(long, value_name = "FILE")]
    labeled: Option<PathBuf>,
    /// Unlabeled pool [default: data.unlabeled from the config]
    #[arg(long, value_name = "FILE")]
    unlabeled: Option<PathBuf>,
    /// Labeled validation data scored after every stage [default: data.val from the config]
    #[arg(long, value_name = "FILE")]
    val: Option<PathBuf>,
    /// Number of stages, the first being plain supervised training [default: 2]
    #[arg(long)]
    stages: Option<usize>,
    /// Pseudo-label confidence threshold (strict) [default: 0.9]
    #[arg(long)]
    threshold: Option<f64>,
    /// Training epochs per model and stage [default: 30]
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory for audio.json, baseline.json, agt.json, stages.csv and pseudo_labels.jsonl
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
}

fn self_train_cmd(a: SelfTrainArgs, mut cfg: RunConfig) -> Result<()> {
    apply_train_flags(&mut cfg, a.epochs, None, None, a.seed.seed)?;
    if let Some(s) = a.stages {
        cfg.semisup.stages = s;
    }
    if let Some(t) = a.threshold {
        cfg.semisup.threshold = t;
    }
    let labeled = read_jsonl(&required(a.labeled, &cfg.data.labeled, "labeled")?)?;
    let unlabeled = read_jsonl(&required(a.unlabeled, &cfg.data.unlabeled, "unlabeled")?)?;
    let val = match a.val.or(cfg.data.val.clone()) {
        Some(p) => Some(read_jsonl(&p)?),
        None => None,
    };
    cfg.model.widths = labeled.widths();
    let run = self_train(
        &cfg.model,
        &labeled,
        &unlabeled,
        val.as_ref(),
        &cfg.semisup,
        &cfg.train,
    )?;

    ensure_dir(&a.out_dir)?;
    for m in run.final_models() {
        save_model(m, &a.out_dir.join(format!("{}.json", m.arch.tag())))?;
    }
    write_text(&a.out_dir.join("stages.csv"), &run.report_csv())?;
    if let Some(pl) = run.stages.last().and_then(|s| s.pseudo.as_ref()) {
        write_pseudo_labels(&a.out_dir.join("pseudo_labels.jsonl"), pl)?;
    }
    for r in run.reports() {
        println!(
            "stage {}: {} training samples, {} pseudo-labels",
            r.stage, r.train_size, r.pseudo_labels
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct VoteArgs {
    /// Audio-only model predictions (any JSONL with id and label)
    #[arg(long, value_name = "FILE")]
    audio: PathBuf,
    /// Baseline model predictions
    #[arg(long, value_name = "FILE")]
    baseline: PathBuf,
    /// AGT model predictions
    #[arg(long, value_name = "FILE")]
    agt: PathBuf,
    /// Final labels as JSONL {"id","label"}
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Branch-usage report as CSV
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Probability of taking the audio prediction when a sensitive label appears [default: 0.8]
    #[arg(long)]
    hubert_weight: Option<f64>,
    /// Probabilities of taking the baseline and AGT predictions [default: 0.1,0.1]
    #[arg(long, value_name = "P,P", value_parser = parse_pair)]
    companion_split: Option<[f64; 2]>,
    #[command(flatten)]
    seed: SeedArg,
}

fn vote_cmd(a: VoteArgs, cfg: RunConfig) -> Result<()> {
    let mut vc = cfg.vote;
    if let Some(w) = a.hubert_weight {
        vc.hubert_weight = w;
    }
    if let Some(c) = a.companion_split {
        vc.companion_split = c;
    }
    if let Some(s) = a.seed.seed {
        vc.seed = s;
    }
    vc.validate()?;
    let triples = align_triples(
        &read_labels(&a.audio)?,
        &read_labels(&a.baseline)?,
        &read_labels(&a.agt)?,
    )?;
    let out = vote_all(&triples, &vc)?;
    out.write_labels(&a.out)?;
    if let Some(path) = &a.report {
        write_text(path, &out.report.to_csv())?;
    }
    let r = &out.report;
    println!(
        "voted {} samples: {} majority, {} probabilistic; wrote {}",
        r.total,
        r.majority,
        r.probabilistic,
        a.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predictions (any JSONL with id and label)
    #[arg(long, value_name = "FILE")]
    preds: PathBuf,
    /// Labeled dataset holding the true labels
    #[arg(long, value_name = "FILE")]
    truth: PathBuf,
    /// Headline average: weighted, macro or per-class
    #[arg(long, default_value = "weighted")]
    averaging: Averaging,
    /// Per-class and averaged scores as CSV
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Confusion matrix as CSV
    #[arg(long, value_name = "FILE")]
    confusion: Option<PathBuf>,
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let truth = read_jsonl(&a.truth)?;
    let labels = truth.labels()?;
    let truths: Vec<_> = truth.ids().map(String::from).zip(labels).collect();
    let report = f1_scores(&read_labels(&a.preds)?, &truths)?;
    if let Some(p) = &a.out {
        write_text(p, &report.to_csv())?;
    }
    if let Some(p) = &a.confusion {
        write_text(p, &report.confusion.to_csv())?;
    }
    match report.headline(a.averaging) {
        Some(f) => println!(
            "{} F1 {f:.4}",
            if a.averaging == Averaging::Macro {
                "macro"
            } else {
                "weighted"
            }
        ),
        None => {
            for s in &report.per_class {
                println!("{} F1 {:.4} (support {})", s.label.name(), s.f1, s.support);
            }
        }
    }
    if report.zero_division > 0 {
        println!(
            "{} class(es) scored 0 by the zero-division convention",
            report.zero_division
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Labeled training dataset
    #[arg(long, value_name = "FILE")]
    train: PathBuf,
    /// Test-set weights in label-code order (worry, happy, neutral, angry, surprise, sad) [default: 0.0326,0.0732,0.0505,0.03412,0.0094,0.1157]
    #[arg(long, value_name = "W,W,W,W,W,W", value_parser = parse_six)]
    test_estimate: Option<[f64; 6]>,
    /// Distribution CSV output
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let train = read_jsonl(&a.train)?;
    let r = distribution_report(&train, &a.test_estimate.unwrap_or(PROBED_TEST_VALUES))?;
    write_text(&a.out, &r.to_csv())?;
    println!("wrote distribution report to {}", a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Labeled data; when no data files are given the reference synthetic benchmark is generated from the config
    #[arg(long, value_name = "FILE")]
    labeled: Option<PathBuf>,
    /// Unlabeled pool
    #[arg(long, value_name = "FILE")]
    unlabeled: Option<PathBuf>,
    /// Held-out labeled test data
    #[arg(long, value_name = "FILE")]
    test: Option<PathBuf>,
    /// Results table CSV (model,features,<strategies>)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Training epochs per model and stage [default: 30]
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
}

fn ablate_cmd(a: AblateArgs, mut cfg: RunConfig) -> Result<()> {
    apply_train_flags(&mut cfg, a.epochs, None, None, a.seed.seed)?;
    let paths = [
        a.labeled.or(cfg.data.labeled.clone()),
        a.unlabeled.or(cfg.data.unlabeled.clone()),
        a.test.or(cfg.data.test.clone()),
    ];
    let data = match paths {
        [None, None, None] => reference_benchmark(&cfg.synthetic)?,
        [Some(l), Some(u), Some(t)] => AblationData {
            labeled: read_jsonl(&l)?,
            unlabeled: read_jsonl(&u)?,
            test: read_jsonl(&t)?,
        },
        _ => {
            return Err(Error::InvalidParameter(
                "give all of --labeled, --unlabeled and --test, or none of them".into(),
            ))
        }
    };
    cfg.model.widths = data.labeled.widths();
    let table = ablation_run(&cfg.ablation_config(), &data)?;
    let csv = table.to_csv();
    write_text(&a.out, &csv)?;
    print!("{csv}");
    Ok(())
}
