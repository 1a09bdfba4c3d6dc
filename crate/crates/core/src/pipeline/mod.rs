//! Flow-record preprocessing: ingestion, label merging, feature filtering,
//! stratified splitting, scaling and PCA.
//!
//! [`preprocess`] runs the whole chain on a merged dataset and returns the
//! transformed splits together with the fitted [`PipelineArtifact`].

mod artifact;
mod features;
mod ingest;
mod labels;
mod pca;
mod scaling;
mod split;

pub use artifact::{FittedScaler, PipelineArtifact, ARTIFACT_MAGIC, ARTIFACT_VERSION};
pub use features::{abs_pearson, drop_correlated, drop_zero_variance};
pub use ingest::{load_csv, read_csv, read_split, write_csv, LoadReport};
pub use labels::{merge_labels, normalise_label, LabelAction, LabelMap, CATEGORIES};
pub use pca::{symmetric_eigen, Pca};
pub use scaling::{percentile_sorted, MinMaxScaler, QuantileTransformer, RobustScaler};
pub use split::{split_sizes, stratified_split, stratified_split_indices, SplitMode, Splits};



use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{config_err, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    #[default]
    Quantile,
    Robust,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub correlation_threshold: f64,
    pub n_quantiles: usize,
    pub scaler: ScalerKind,
    pub pca: bool,
    /// Cumulative explained-variance target for PCA.
    pub pca_variance: f64,
    pub split_mode: SplitMode,
    pub split_fractions: [f64; 3],
    /// Rescale the final features onto `[0, 1]` (required by RBM inputs).
    pub unit_range: bool,
    /// Expected removal counts; a mismatch is logged, not fatal.
    pub expected_zero_variance: Option<usize>,
    pub expected_correlated: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            correlation_threshold: 0.9,
            n_quantiles: 1000,
            scaler: ScalerKind::Quantile,
            pca: true,
            pca_variance: 0.99,
            split_mode: SplitMode::Shuffled,
            split_fractions: [0.6, 0.2, 0.2],
            unit_range: true,
            expected_zero_variance: None,
            expected_correlated: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.correlation_threshold > 0.0 && self.correlation_threshold <= 1.0) {
            return Err(config_err!(
                "correlation_threshold {} outside (0, 1]",
                self.correlation_threshold
            ));
        }
        if self.n_quantiles < 2 {
            return Err(config_err!("n_quantiles must be at least 2"));
        }
        let v = self.pca_variance;
        if !(v > 0.0 && v <= 1.0) {
            return Err(config_err!("pca_variance {v} outside (0, 1]"));
        }
        let f = self.split_fractions;
        if f.iter().any(|&x| !(x > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(config_err!("split_fractions {f:?} must be positive and sum to 1"));
        }
        Ok(())
    }
}

/// Row and feature counts after one preprocessing stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub rows: usize,
    pub features: usize,
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub artifact: PipelineArtifact,
    pub splits: Splits,
    pub stages: Vec<StageReport>,
}

/// Splits `merged`, then fits every learned step on the training rows only:
/// zero-variance and correlation filtering, the scaler and PCA. Validation
/// and test rows are transformed with the fitted artifact.
pub fn preprocess(merged: &Dataset, cfg: &PipelineConfig, rng: &Rng) -> Result<Preprocessed> {
    cfg.validate()?;
    let mut stages = Vec::new();
    let mut stage = |name: &str, rows: usize, features: usize| {
        log::info!("{name}: {rows} rows, {features} features");
        stages.push(StageReport {
            stage: name.to_string(),
            rows,
            features,
        });
    };
    stage("merged", merged.n_rows(), merged.n_features());

    let raw = stratified_split(merged, cfg.split_fractions, cfg.split_mode, &rng.derive("split"))?;
    stage("split/train", raw.train.n_rows(), raw.train.n_features());
    stage("split/val", raw.val.n_rows(), raw.val.n_features());
    stage("split/test", raw.test.n_rows(), raw.test.n_features());

    let (train, removed_zero_variance) = drop_zero_variance(&raw.train);
    stage("drop_zero_variance", train.n_rows(), train.n_features());
    let (train, removed_correlated) = drop_correlated(&train, cfg.correlation_threshold)?;
    stage("drop_correlated", train.n_rows(), train.n_features());
    for (what, expected, got) in [
        ("zero-variance", cfg.expected_zero_variance, removed_zero_variance.len()),
        ("correlated", cfg.expected_correlated, removed_correlated.len()),
    ] {
        if let Some(e) = expected.filter(|&e| e != got) {
            log::warn!("removed {got} {what} features, configuration expects {e}");
        }
    }

    let scaler = match cfg.scaler {
        ScalerKind::Quantile => FittedScaler::Quantile(QuantileTransformer::fit(&train.features, cfg.n_quantiles)?),
        ScalerKind::Robust => FittedScaler::Robust(RobustScaler::fit(&train.features)?),
        ScalerKind::None => FittedScaler::None,
    };
    let scaled = scaler.transform(&train.features)?;
    let pca = if cfg.pca {
        Some(Pca::fit(&scaled, cfg.pca_variance)?)
    } else {
        None
    };
    let unit_range = if cfg.unit_range {
        let projected = match &pca {
            Some(p) => p.transform(&scaled)?,
            None => scaled,
        };
        Some(MinMaxScaler::fit(&projected)?)
    } else {
        None
    };
    let artifact = PipelineArtifact {
        kept_columns: train.feature_names.clone(),
        removed_zero_variance,
        removed_correlated,
        class_names: merged.class_names.clone(),
        scaler,
        pca,
        unit_range,
        fitted_rows: train.n_rows(),
    };
    let splits = Splits {
        train: artifact.transform_filtered(&train)?,
        val: artifact.transform(&raw.val)?,
        test: artifact.transform(&raw.test)?,
    };
    stage("transformed", splits.train.n_rows(), splits.train.n_features());
    Ok(Preprocessed {
        artifact,
        splits,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn fixture(seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let n = 300;
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let features = Matrix::from_fn(n, 5, |r, c| match c {
            0 => 7.0,
            1 => labels[r] as f64 + rng.normal(),
            2 => 0.0, // overwritten below
            _ => rng.normal().exp(),
        });
        let mut features = features;
        for r in 0..n {
            features[(r, 2)] = 2.0 * features[(r, 1)] + 1.0;
        }
        Dataset::new(
            features,
            labels,
            (0..5).map(|i| format!("f{i}")).collect(),
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap()
    }

    #[test]
    fn full_chain_shapes() {
        let out = preprocess(&fixture(1), &PipelineConfig::default(), &Rng::new(0)).unwrap();
        assert_eq!(out.artifact.removed_zero_variance, vec!["f0"]);
        assert_eq!(out.artifact.removed_correlated, vec!["f2"]);
        assert_eq!(out.artifact.kept_columns, vec!["f1", "f3", "f4"]);
        let s = &out.splits;
        assert_eq!((s.train.n_rows(), s.val.n_rows(), s.test.n_rows()), (180, 60, 60));
        let k = out.artifact.n_outputs();
        assert!(k >= 1 && k <= 3);
        assert_eq!(s.test.n_features(), k);
        let stages: Vec<&str> = out.stages.iter().map(|s| s.stage.as_str()).collect();
        assert_eq!(stages[0], "merged");
        for split in [&s.train, &s.val, &s.test] {
            assert!(split.features.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(*stages.last().unwrap(), "transformed");
    }

    #[test]
    fn artifact_ignores_val_and_test_rows() {
        let cfg = PipelineConfig::default();
        let base = fixture(2);
        let a = preprocess(&base, &cfg, &Rng::new(3)).unwrap();
        let [train_rows, ..] =
            stratified_split_indices(&base, cfg.split_fractions, cfg.split_mode, &Rng::new(3).derive("split")).unwrap();
        let mut changed = base.clone();
        for r in (0..changed.n_rows()).filter(|r| !train_rows.contains(r)) {
            changed.features[(r, 3)] *= 100.0;
            changed.features[(r, 1)] += 1e6;
        }
        let b = preprocess(&changed, &cfg, &Rng::new(3)).unwrap();
        assert_eq!(a.artifact, b.artifact);
    }

    #[test]
    fn no_pca_keeps_filtered_names() {
        let cfg = PipelineConfig {
            pca: false,
            scaler: ScalerKind::Robust,
            ..Default::default()
        };
        let out = preprocess(&fixture(4), &cfg, &Rng::new(0)).unwrap();
        assert_eq!(out.splits.train.feature_names, vec!["f1", "f3", "f4"]);
    }

    #[test]
    fn config_is_validated() {
        let bad = PipelineConfig {
            split_fractions: [0.5, 0.5, 0.5],
            ..Default::default()
        };
        assert!(preprocess(&fixture(1), &bad, &Rng::new(0)).is_err());
        let bad = PipelineConfig {
            pca_variance: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
