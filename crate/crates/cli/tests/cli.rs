use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_agtfuse");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("spawn agtfuse")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "agtfuse {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_CONFIG: &str = r#"
[model]
d_model = 8
n_heads = 2
d_ff = 16
hidden = 8
n_layers = 1

[train]
epochs = 3
batch_size = 16
"#;

/// Small synthetic split under `dir`, plus a config file for tiny models.
fn small_setup(dir: &Path) -> (PathBuf, PathBuf) {
    let split = dir.join("split");
    ok(&[
        "gen-data",
        "--split-dir",
        p(&split),
        "--counts",
        "12,12,12,12,12,12",
        "--width",
        "6",
        "--fractions",
        "0.3,0.4,0.3",
        "--seed",
        "4",
    ]);
    let cfg = dir.join("run.toml");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    (split, cfg)
}

/// gen-data, train, predict and eval twice in separate directories.
fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let (split, cfg) = small_setup(dir);
    let model = dir.join("agt.json");
    let preds = dir.join("preds.jsonl");
    let f1 = dir.join("f1.csv");
    let cm = dir.join("cm.csv");
    let loss = dir.join("loss.csv");
    ok(&[
        "--config",
        p(&cfg),
        "train",
        "--arch",
        "agt",
        "--data",
        p(&split.join("labeled.jsonl")),
        "--out",
        p(&model),
        "--loss-curve",
        p(&loss),
        "--seed",
        "9",
    ]);
    ok(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&split.join("test.jsonl")),
        "--out",
        p(&preds),
    ]);
    let stdout = ok(&[
        "eval",
        "--preds",
        p(&preds),
        "--truth",
        p(&split.join("test.jsonl")),
        "--out",
        p(&f1),
        "--confusion",
        p(&cm),
    ]);
    assert!(stdout.starts_with("weighted F1 "));
    [
        "split/labeled.jsonl",
        "split/unlabeled.jsonl",
        "split/test.jsonl",
        "agt.json",
        "loss.csv",
        "preds.jsonl",
        "f1.csv",
        "cm.csv",
    ]
    .iter()
    .map(|f| (f.to_string(), fs::read(dir.join(f)).unwrap()))
    .collect()
}

#[test]
fn pipeline_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path());
    let rb = pipeline(b.path());
    for ((name, x), (_, y)) in ra.iter().zip(&rb) {
        assert!(x == y, "{name} differs between runs");
    }
    let f1 = String::from_utf8(ra[6].1.clone()).unwrap();
    assert!(f1.starts_with("scope,precision,recall,f1,support,zero_division\n"));
    assert_eq!(f1.lines().count(), 9);
    let unlabeled = String::from_utf8(ra[1].1.clone()).unwrap();
    assert!(unlabeled.lines().all(|l| {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        v.get("label").is_none_or(|x| x.is_null())
    }));
}

#[test]
fn vote_with_mismatched_ids_lists_them() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, ids: &[&str]| {
        let body: String = ids
            .iter()
            .map(|id| format!("{{\"id\":\"{id}\",\"label\":1}}\n"))
            .collect();
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        path
    };
    let a = write("a.jsonl", &["x", "y", "z"]);
    let b = write("b.jsonl", &["x", "y", "z"]);
    let c = write("c.jsonl", &["x", "y", "w"]);
    let out = run(&[
        "vote",
        "--audio",
        p(&a),
        "--baseline",
        p(&b),
        "--agt",
        p(&c),
        "--out",
        p(&dir.path().join("v.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[z]") && err.contains("[w]"), "{err}");
    assert!(!dir.path().join("v.jsonl").exists());
}

#[test]
fn vote_writes_labels_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let body = "{\"id\":\"a\",\"label\":1}\n{\"id\":\"b\",\"label\":0}\n";
    let f = dir.path().join("p.jsonl");
    fs::write(&f, body).unwrap();
    let out = dir.path().join("v.jsonl");
    let report = dir.path().join("r.csv");
    ok(&[
        "vote",
        "--audio",
        p(&f),
        "--baseline",
        p(&f),
        "--agt",
        p(&f),
        "--out",
        p(&out),
        "--report",
        p(&report),
    ]);
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "{\"id\":\"a\",\"label\":1}\n{\"id\":\"b\",\"label\":0}\n"
    );
    assert!(fs::read_to_string(&report)
        .unwrap()
        .starts_with("metric,count,fraction\n"));
}

#[test]
fn ablate_writes_two_by_three_table() {
    let dir = tempfile::tempdir().unwrap();
    let (split, cfg) = small_setup(dir.path());
    let table = dir.path().join("ablation.csv");
    ok(&[
        "--config",
        p(&cfg),
        "ablate",
        "--labeled",
        p(&split.join("labeled.jsonl")),
        "--unlabeled",
        p(&split.join("unlabeled.jsonl")),
        "--test",
        p(&split.join("test.jsonl")),
        "--out",
        p(&table),
    ]);
    let csv = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,features,N,P,P+V");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("baseline,A+V+T,"));
    assert!(lines[2].starts_with("agt,A+V+T,"));
    for l in &lines[1..] {
        for cell in l.split(',').skip(2) {
            let f: f64 = cell.parse().unwrap();
            assert!((0.0..=1.0).contains(&f));
        }
    }
}

#[test]
fn ablate_needs_all_or_no_data_files() {
    let out = run(&["ablate", "--labeled", "x.jsonl", "--out", "t.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn self_train_and_pseudo_label() {
    let dir = tempfile::tempdir().unwrap();
    let (split, cfg) = small_setup(dir.path());
    let out = dir.path().join("st");
    let stdout = ok(&[
        "--config",
        p(&cfg),
        "self-train",
        "--labeled",
        p(&split.join("labeled.jsonl")),
        "--unlabeled",
        p(&split.join("unlabeled.jsonl")),
        "--val",
        p(&split.join("test.jsonl")),
        "--threshold",
        "0.5",
        "--out-dir",
        p(&out),
    ]);
    assert!(stdout.contains("stage 1:") && stdout.contains("stage 2:"));
    for f in [
        "audio.json",
        "baseline.json",
        "agt.json",
        "stages.csv",
        "pseudo_labels.jsonl",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }

    let mut files = Vec::new();
    for arch in ["audio", "baseline", "agt"] {
        let preds = dir.path().join(format!("{arch}.preds.jsonl"));
        ok(&[
            "predict",
            "--model",
            p(&out.join(format!("{arch}.json"))),
            "--data",
            p(&split.join("unlabeled.jsonl")),
            "--out",
            p(&preds),
        ]);
        files.push(preds);
    }
    let pl = dir.path().join("pl.jsonl");
    ok(&[
        "pseudo-label",
        "--audio",
        p(&files[0]),
        "--baseline",
        p(&files[1]),
        "--agt",
        p(&files[2]),
        "--threshold",
        "0.5",
        "--out",
        p(&pl),
    ]);
    for line in fs::read_to_string(&pl).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["confidence"].as_f64().unwrap() > 0.5);
        assert_eq!(v["source"], "audio&baseline&agt");
    }
}

#[test]
fn report_writes_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let (split, _) = small_setup(dir.path());
    let out = dir.path().join("dist.csv");
    ok(&[
        "report",
        "--train",
        p(&split.join("labeled.jsonl")),
        "--out",
        p(&out),
    ]);
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("label,train_value,train_proportion,test_value,test_proportion\n"));
    assert!(csv.contains("\nangry,"));
    assert!(csv.contains(",0.03412,"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["train", "--arch", "agt"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let out = run(&[
        "eval",
        "--preds",
        "a",
        "--truth",
        "b",
        "--averaging",
        "median",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_parameter_and_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "gen-data",
        "--out",
        p(&dir.path().join("d.jsonl")),
        "--conflict-rate",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[parameter]"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[train]\nepochz = 3\n").unwrap();
    let out = run(&["--config", p(&cfg), "report", "--train", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_exits_1() {
    let out = run(&[
        "report",
        "--train",
        "/nonexistent/train.jsonl",
        "--out",
        "x.csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/train.jsonl"));
}

#[test]
fn help_documents_every_subcommand() {
    let top = ok(&["--help"]);
    let subs = [
        "gen-data",
        "train",
        "predict",
        "pseudo-label",
        "self-train",
        "vote",
        "eval",
        "report",
        "ablate",
    ];
    for s in subs {
        assert!(top.contains(s), "top-level help lacks {s}");
        let help = ok(&[s, "--help"]);
        assert!(help.contains("--config"), "{s} help lacks --config");
    }
    let train = ok(&["train", "--help"]);
    for flag in [
        "--arch",
        "--data",
        "--epochs",
        "--lr",
        "--seed",
        "default: 30",
    ] {
        assert!(train.contains(flag), "train help lacks {flag}");
    }
    let vote = ok(&["vote", "--help"]);
    assert!(vote.contains("default: 0.8") && vote.contains("default: 0.1,0.1"));
}
