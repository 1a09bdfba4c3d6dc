//! The five subcommands. Each reads the experiment config, works inside one
//! output directory and returns a printable summary.
//!
//! Output directory layout:
//!
//! ```text
//! pipeline.dbnp  train.csv  val.csv  test.csv  preprocess.json   (preprocess)
//! model.dbnb  history.json                                       (train)
//! eval-<split>.txt  eval-<split>.jsonl                           (evaluate)
//! sweep.tsv  sweep.jsonl                                         (sweep)
//! gradcheck.json                                                 (gradcheck)
//! ```
//!
//! Every random stream descends from the config seed: `synthetic` for
//! generated data, `preprocess`, `balance` and `train`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dbn_ids::balancing::{balance, BalanceSpec};
use dbn_ids::eval::{evaluate_labels, EvalReport};
use dbn_ids::gradcheck::{run_suite, GradCheckCase};
use dbn_ids::model::{Classifier, ModelRegistry, TrainRequest, Trained};
use dbn_ids::net::History;
use dbn_ids::numerics::Rng;
use dbn_ids::pipeline::{load_csv, merge_labels, preprocess, read_split, write_csv, LabelMap, PipelineArtifact, StageReport};
use dbn_ids::synthetic::gaussian_blobs;
use dbn_ids::{Dataset, Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bundle::ModelBundle;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const PIPELINE_FILE: &str = "pipeline.dbnp";
pub const BUNDLE_FILE: &str = "model.dbnb";
pub const SPLITS: [&str; 3] = ["train", "val", "test"];

/// Runs `f`, logging its wall time under `stage`.
pub fn timed<T>(stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    log::info!("[{stage}] {:.3}s", start.elapsed().as_secs_f64());
    out
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serialises");
    s.push('\n');
    s
}

fn split_path(out: &Path, split: &str) -> PathBuf {
    out.join(format!("{split}.csv"))
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::State(format!("{} is missing; {hint}", path.display())))
    }
}

/// Hex SHA-256 over a dataset's labels and feature bits.
pub fn dataset_checksum(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for &l in &ds.labels {
        h.update((l as u64).to_le_bytes());
    }
    for v in ds.features.as_slice() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// The labelled dataset the config describes, with merged class labels.
pub fn load_merged(cfg: &ExperimentConfig) -> Result<Dataset> {
    if let Some(spec) = &cfg.data.synthetic {
        return gaussian_blobs(spec, &Rng::new(cfg.seed).derive("synthetic"));
    }
    let map = LabelMap::cicids2017();
    let mut merged: Option<Dataset> = None;
    for path in &cfg.data.inputs {
        let report = timed(&format!("load {}", path.display()), || load_csv(path))?;
        if report.dropped_rows > 0 {
            log::warn!("{}: dropped {} rows with invalid values", path.display(), report.dropped_rows);
        }
        if !report.excluded_columns.is_empty() {
            log::info!("{}: excluded columns {:?}", path.display(), report.excluded_columns);
        }
        let ds = merge_labels(&report.dataset, &map)?;
        merged = Some(match merged {
            None => ds,
            Some(acc) => acc.concat(&ds)?,
        });
    }
    merged.ok_or_else(|| Error::Config("no data inputs".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassCount {
    pub class: String,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PreprocessSummary {
    pub class_counts: Vec<ClassCount>,
    pub stages: Vec<StageReport>,
    pub removed_zero_variance: Vec<String>,
    pub removed_correlated: Vec<String>,
    pub output_features: Vec<String>,
    pub split_checksums: Vec<(String, String)>,
}

impl std::fmt::Display for PreprocessSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "class counts after merging:")?;
        for c in &self.class_counts {
            writeln!(f, "  {:<12} {:>9}", c.class, c.count)?;
        }
        writeln!(f, "stages:")?;
        for s in &self.stages {
            writeln!(f, "  {:<20} {:>9} rows {:>4} features", s.stage, s.rows, s.features)?;
        }
        writeln!(
            f,
            "removed {} zero-variance and {} correlated features; {} outputs",
            self.removed_zero_variance.len(),
            self.removed_correlated.len(),
            self.output_features.len()
        )
    }
}

pub fn cmd_preprocess(cfg: &ExperimentConfig, out: &Path) -> CliResult<PreprocessSummary> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let merged = timed("load", || load_merged(cfg))?;
    let class_counts = merged
        .class_names
        .iter()
        .zip(merged.class_counts())
        .map(|(class, count)| ClassCount {
            class: class.clone(),
            count,
        })
        .collect();
    let pre = timed("preprocess", || {
        preprocess(&merged, &cfg.pipeline, &Rng::new(cfg.seed).derive("preprocess"))
    })?;
    timed("write", || -> Result<()> {
        pre.artifact.save(out.join(PIPELINE_FILE))?;
        for (name, ds) in SPLITS.iter().zip([&pre.splits.train, &pre.splits.val, &pre.splits.test]) {
            let path = split_path(out, name);
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_csv(ds, BufWriter::new(file))?;
        }
        Ok(())
    })?;
    let summary = PreprocessSummary {
        class_counts,
        stages: pre.stages,
        removed_zero_variance: pre.artifact.removed_zero_variance.clone(),
        removed_correlated: pre.artifact.removed_correlated.clone(),
        output_features: pre.artifact.output_names(),
        split_checksums: SPLITS
            .iter()
            .zip([&pre.splits.train, &pre.splits.val, &pre.splits.test])
            .map(|(n, ds)| (n.to_string(), dataset_checksum(ds)))
            .collect(),
    };
    write_file(&out.join("preprocess.json"), to_json(&summary))?;
    Ok(summary)
}

/// Preprocessed splits plus the artifact that produced them.
pub struct Prepared {
    pub artifact: PipelineArtifact,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn load_prepared(out: &Path) -> Result<Prepared> {
    let hint = "run `preprocess` first";
    require(&out.join(PIPELINE_FILE), hint)?;
    for s in SPLITS {
        require(&split_path(out, s), hint)?;
    }
    let artifact = PipelineArtifact::load(out.join(PIPELINE_FILE))?;
    let read = |s| read_split(split_path(out, s), &artifact.class_names);
    let (train, val, test) = (read("train")?, read("val")?, read("test")?);
    for ds in [&train, &val, &test] {
        if ds.feature_names != artifact.output_names() {
            return Err(Error::State("split columns do not match the pipeline artifact".into()));
        }
    }
    Ok(Prepared {
        artifact,
        train,
        val,
        test,
    })
}

pub struct TrainOutcome {
    pub trained: Trained,
    pub balanced_counts: Vec<usize>,
}

/// Balances the training split with `spec` and trains the configured model.
/// Validation and test data are never passed to the balancer.
pub fn train_model(cfg: &ExperimentConfig, spec: &BalanceSpec, prepared: &Prepared) -> Result<TrainOutcome> {
    let root = Rng::new(cfg.seed);
    let balanced = timed(&format!("balance {}", spec.strategy), || {
        balance(&prepared.train, spec, &root.derive("balance"))
    })?;
    log::info!(
        "{}: {} training rows after balancing, class counts {:?}",
        spec.strategy,
        balanced.dataset.n_rows(),
        balanced.dataset.class_counts()
    );
    let registry = ModelRegistry::builtin();
    let factory = registry.get(&cfg.model.kind)?;
    let req = TrainRequest {
        train: &balanced.dataset,
        val: Some(&prepared.val),
        sample_weights: balanced.sample_weights.as_deref(),
        weighting: balanced.weighting,
        settings: &cfg.model,
        rng: &root.derive("train"),
    };
    let mut trained = timed(&format!("train {} ({})", cfg.model.kind, spec.strategy), || factory.train(&req))?;
    trained.model.narrow_to_f32();
    Ok(TrainOutcome {
        trained,
        balanced_counts: balanced.dataset.class_counts(),
    })
}

fn report_on(model: &dyn Classifier, ds: &Dataset) -> Result<EvalReport> {
    let predicted = model.predict(&ds.features)?;
    evaluate_labels(&ds.labels, &predicted, &ds.class_names)
}

#[derive(Debug, Clone, Serialize)]
struct TrainLog<'a> {
    strategy: &'a str,
    balanced_counts: &'a [usize],
    history: &'a History,
    pretrain_errors: &'a [Vec<f64>],
}

pub struct TrainSummary {
    pub bundle_path: PathBuf,
    pub validation: EvalReport,
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> CliResult<TrainSummary> {
    let prepared = load_prepared(out)?;
    let outcome = train_model(cfg, &cfg.balance, &prepared)?;
    let model = outcome.trained.model.as_ref();
    let validation = report_on(model, &prepared.val)?;
    let training = serde_json::json!({
        "seed": cfg.seed,
        "balance": cfg.balance,
        "model": cfg.model,
    });
    let metrics = serde_json::json!({ "val": validation });
    let bundle = ModelBundle::new(model, prepared.artifact, training, metrics)?;
    let bundle_path = out.join(BUNDLE_FILE);
    bundle.save(&bundle_path)?;
    let log = TrainLog {
        strategy: &cfg.balance.strategy,
        balanced_counts: &outcome.balanced_counts,
        history: &outcome.trained.history,
        pretrain_errors: &outcome.trained.pretrain_errors,
    };
    write_file(&out.join("history.json"), to_json(&log))?;
    Ok(TrainSummary {
        bundle_path,
        validation,
    })
}

/// What to evaluate: a preprocessed split, or a raw flow CSV pushed
/// through the bundle's own pipeline.
#[derive(Debug, Clone)]
pub enum EvalSource {
    Split(String),
    RawCsv(PathBuf),
}

pub fn cmd_evaluate(bundle_path: &Path, source: &EvalSource, out: &Path) -> CliResult<EvalReport> {
    let bundle = ModelBundle::load(bundle_path)?;
    let model = bundle.classifier()?;
    let (tag, data) = match source {
        EvalSource::Split(split) => {
            if !SPLITS.contains(&split.as_str()) {
                return Err(Error::Config(format!("unknown split {split:?}; expected one of {SPLITS:?}")).into());
            }
            let path = split_path(out, split);
            require(&path, "run `preprocess` first")?;
            (split.clone(), read_split(&path, &bundle.class_names)?)
        }
        EvalSource::RawCsv(path) => {
            let raw = load_csv(path)?.dataset;
            let merged = merge_labels(&raw, &LabelMap::cicids2017())?;
            if merged.class_names != bundle.class_names {
                return Err(Error::Data("input classes differ from the bundle's classes".into()).into());
            }
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (format!("raw-{stem}"), bundle.pipeline.transform(&merged)?)
        }
    };
    let report = timed("evaluate", || report_on(model.as_ref(), &data))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join(format!("eval-{tag}.txt")), report.to_string())?;
    write_file(&out.join(format!("eval-{tag}.jsonl")), report.to_json_lines())?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub strategy: String,
    pub balanced_counts: Vec<usize>,
    pub test: EvalReport,
    pub val_checksum: String,
    pub test_checksum: String,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Tab-separated grid: one line per (strategy, metric), one column per class.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let Some(first) = self.rows.first() else { return s };
        s.push_str("strategy\tmetric");
        for c in &first.test.class_names {
            let _ = write!(s, "\t{c}");
        }
        s.push_str("\tmacro\n");
        for row in &self.rows {
            let r = &row.test;
            for (metric, per, agg) in [
                ("precision", r.per_class.iter().map(|m| m.precision).collect::<Vec<_>>(), r.macro_avg.precision),
                ("recall", r.per_class.iter().map(|m| m.recall).collect(), r.macro_avg.recall),
                ("f1", r.per_class.iter().map(|m| m.f1).collect(), r.macro_avg.f1),
            ] {
                let _ = write!(s, "{}\t{metric}", row.strategy);
                for v in per {
                    let _ = write!(s, "\t{v:.4}");
                }
                let _ = writeln!(s, "\t{agg:.4}");
            }
        }
        s
    }

    pub fn to_json_lines(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain data serialises") + "\n")
            .collect()
    }

    pub fn row(&self, strategy: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }
}

/// Trains one model per strategy from the same seed and compares them on
/// the test split. Strategies run on separate threads.
pub fn cmd_sweep(cfg: &ExperimentConfig, strategies: &[String], out: &Path) -> CliResult<SweepReport> {
    if strategies.is_empty() {
        return Err(Error::Config("sweep needs at least one strategy".into()).into());
    }
    let prepared = load_prepared(out)?;
    let results: Vec<Result<SweepRow>> = std::thread::scope(|scope| {
        let handles: Vec<_> = strategies
            .iter()
            .map(|strategy| {
                let prepared = &prepared;
                scope.spawn(move || -> Result<SweepRow> {
                    let spec = BalanceSpec {
                        strategy: strategy.clone(),
                        ..cfg.balance.clone()
                    };
                    let outcome = train_model(cfg, &spec, prepared)?;
                    Ok(SweepRow {
                        strategy: strategy.clone(),
                        balanced_counts: outcome.balanced_counts,
                        test: report_on(outcome.trained.model.as_ref(), &prepared.test)?,
                        val_checksum: dataset_checksum(&prepared.val),
                        test_checksum: dataset_checksum(&prepared.test),
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    if rows
        .windows(2)
        .any(|w| w[0].val_checksum != w[1].val_checksum || w[0].test_checksum != w[1].test_checksum)
    {
        return Err(Error::State("evaluation data changed between strategies".into()).into());
    }
    let report = SweepReport { rows };
    write_file(&out.join("sweep.tsv"), report.to_tsv())?;
    write_file(&out.join("sweep.jsonl"), report.to_json_lines())?;
    Ok(report)
}

pub fn cmd_gradcheck(seed: u64, out: Option<&Path>) -> CliResult<Vec<GradCheckCase>> {
    let cases = timed("gradcheck", || run_suite(seed))?;
    if let Some(out) = out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_file(&out.join("gradcheck.json"), to_json(&cases))?;
    }
    Ok(cases)
}

/// Fails with the names of any cases over tolerance.
pub fn gradcheck_verdict(cases: &[GradCheckCase]) -> CliResult<()> {
    let failed: Vec<&str> = cases.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(failed.join(", ")))
    }
}

pub fn format_gradcheck(cases: &[GradCheckCase]) -> String {
    let mut s = String::new();
    for c in cases {
        let _ = writeln!(
            s,
            "{:<24} params {:>4}  max rel {:.3e}  max abs {:.3e}  {}",
            c.name,
            c.check.parameters,
            c.check.max_relative_error,
            c.check.max_absolute_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    s
}
