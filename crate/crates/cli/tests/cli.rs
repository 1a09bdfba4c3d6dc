use std::path::{Path, PathBuf};
use std::process::Command;

use dbn_ids_cli::commands::{
    cmd_evaluate, cmd_gradcheck, cmd_preprocess, cmd_sweep, cmd_train, EvalSource, BUNDLE_FILE, PIPELINE_FILE,
};
use dbn_ids_cli::{ExperimentConfig, ModelBundle};

const CATEGORIES: [&str; 6] = ["Benign", "Botnet", "Brute Force", "DoS/DDoS", "PortScan", "Web Attack"];

/// Six balanced, well-separated blobs and a tiny model.
fn tiny_config(kind: &str, extra: &str) -> String {
    format!(
        r#"
version = 1
seed = 5

[data.synthetic]
counts = [100, 100, 100, 100, 100, 100]
dims = 8
separation = 8.0

[pipeline]
pca = false

[model]
kind = "{kind}"
hidden_layers = [12, 8]

[model.pretrain]
epochs = 2

[model.finetune]
epochs = 40
learning_rate = 0.02
batch_size = 16

[model.mlp]
hidden_layers = [16]
epochs = 20
learning_rate = 0.05
batch_size = 16
{extra}
"#
    )
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn preprocess_writes_stratified_splits_deterministically() {
    let cfg = ExperimentConfig::from_toml(&tiny_config("dbn", "")).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let summary = cmd_preprocess(&cfg, a.path()).unwrap();
    cmd_preprocess(&cfg, b.path()).unwrap();
    assert_eq!(files(a.path()), files(b.path()));
    assert!(a.path().join(PIPELINE_FILE).exists());
    let counts: Vec<usize> = summary.class_counts.iter().map(|c| c.count).collect();
    assert_eq!(counts, vec![100; 6]);

    let prepared = dbn_ids_cli::commands::load_prepared(a.path()).unwrap();
    assert_eq!(prepared.train.class_counts(), vec![60; 6]);
    assert_eq!(prepared.val.class_counts(), vec![20; 6]);
    assert_eq!(prepared.test.class_counts(), vec![20; 6]);

    let c = tempfile::tempdir().unwrap();
    let mut other = cfg.clone();
    other.seed = 6;
    cmd_preprocess(&other, c.path()).unwrap();
    assert_ne!(files(a.path()), files(c.path()));
}

#[test]
fn train_then_evaluate_reproduces_the_bundled_metrics() {
    for kind in ["dbn", "mlp"] {
        let cfg = ExperimentConfig::from_toml(&tiny_config(kind, "")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        cmd_preprocess(&cfg, dir.path()).unwrap();
        let summary = cmd_train(&cfg, dir.path()).unwrap();
        let bundle = ModelBundle::load(&summary.bundle_path).unwrap();
        assert_eq!(bundle.kind, kind);
        assert_eq!(bundle.class_names, CATEGORIES);

        let reloaded = cmd_evaluate(&summary.bundle_path, &EvalSource::Split("val".into()), dir.path()).unwrap();
        assert_eq!(reloaded, summary.validation);
        assert_eq!(serde_json::to_value(&reloaded).unwrap(), bundle.metrics["val"]);
        assert!(reloaded.macro_avg.f1 > 0.9, "{kind}: {}", reloaded.macro_avg.f1);

        let text = std::fs::read_to_string(dir.path().join("eval-val.txt")).unwrap();
        let mut at = 0;
        for name in CATEGORIES {
            at += text[at..].find(name).unwrap_or_else(|| panic!("{name} missing or out of order"));
        }
        let jsonl = std::fs::read_to_string(dir.path().join("eval-val.jsonl")).unwrap();
        assert!(jsonl.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    }
}

#[test]
fn memorised_training_split_gives_identity_confusion() {
    let mut cfg = ExperimentConfig::from_toml(&tiny_config("mlp", "")).unwrap();
    cfg.model.mlp.epochs = 100;
    cfg.model.mlp.select_best = false;
    let dir = tempfile::tempdir().unwrap();
    cmd_preprocess(&cfg, dir.path()).unwrap();
    let bundle = cmd_train(&cfg, dir.path()).unwrap().bundle_path;
    let report = cmd_evaluate(&bundle, &EvalSource::Split("train".into()), dir.path()).unwrap();
    for a in 0..6 {
        for p in 0..6 {
            let expected = if a == p { 60 } else { 0 };
            assert_eq!(report.confusion.get(a, p), expected, "({a}, {p})");
        }
    }
}

#[test]
fn training_twice_gives_identical_bundles() {
    let cfg = ExperimentConfig::from_toml(&tiny_config("dbn", "[balance]\nstrategy = \"smote+undersample\"\ntargets = { Benign = 40 }\n")).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        cmd_preprocess(&cfg, d.path()).unwrap();
        cmd_train(&cfg, d.path()).unwrap();
    }
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn sweep_grid_has_one_row_per_strategy_and_shared_eval_data() {
    let cfg = ExperimentConfig::from_toml(&tiny_config("mlp", "")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cmd_preprocess(&cfg, dir.path()).unwrap();
    let strategies: Vec<String> = vec!["none".into(), "class_weights".into()];
    let first = cmd_sweep(&cfg, &strategies, dir.path()).unwrap();
    let tsv = std::fs::read_to_string(dir.path().join("sweep.tsv")).unwrap();
    let second = cmd_sweep(&cfg, &strategies, dir.path()).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("sweep.tsv")).unwrap(), tsv);
    assert_eq!(first.to_json_lines(), second.to_json_lines());

    assert_eq!(first.rows.len(), 2);
    assert_eq!(tsv.lines().count(), 1 + 2 * 3);
    assert_eq!(first.rows[0].val_checksum, first.rows[1].val_checksum);
    assert_eq!(first.rows[0].test_checksum, first.rows[1].test_checksum);
}

#[test]
fn gradcheck_command_passes_and_records_results() {
    let dir = tempfile::tempdir().unwrap();
    let cases = cmd_gradcheck(3, Some(dir.path())).unwrap();
    assert!(cases.iter().all(|c| c.passed));
    assert!(dir.path().join("gradcheck.json").exists());
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dbn-ids"));
    c.env("RUST_LOG", "error");
    c
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn status(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = d.join("out");
    let out_s = out.to_str().unwrap();

    let bad = write_config(d, "version = 1\nbogus = 2\n[data]\ninputs = [\"x.csv\"]\n");
    assert_eq!(status(&["preprocess", "--config", bad.to_str().unwrap(), "--out", out_s]), 2);

    let missing = write_config(d, "version = 1\n[data]\ninputs = [\"nope.csv\"]\n");
    assert_eq!(status(&["preprocess", "--config", missing.to_str().unwrap(), "--out", out_s]), 3);

    let good = write_config(d, &tiny_config("mlp", ""));
    let good_s = good.to_str().unwrap();
    assert_eq!(status(&["train", "--config", good_s, "--out", out_s]), 4);

    assert_eq!(status(&["preprocess", "--config", good_s, "--out", out_s, "--seed", "8"]), 0);
    assert_eq!(status(&["train", "--config", good_s, "--out", out_s, "--seed", "8"]), 0);
    let ok = bin().args(["evaluate", "--config", good_s, "--out", out_s]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("Web Attack"));

    let bundle = out.join(BUNDLE_FILE);
    let mut bytes = std::fs::read(&bundle).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(&bundle, bytes).unwrap();
    assert_eq!(status(&["evaluate", "--config", good_s, "--out", out_s]), 4);

    assert_eq!(status(&["gradcheck"]), 0);
}
