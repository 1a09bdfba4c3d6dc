//! Class-imbalance treatments applied to the training split.
//!
//! Each treatment implements [`BalanceStrategy`] and is looked up by name in a
//! [`BalanceRegistry`]. Built-in names: `none`, `undersample`, `smote`,
//! `smote+undersample`, `class_weights`, `sample_weights`.

mod smote;
mod undersample;
mod weights;

use std::collections::BTreeMap;

pub use smote::{nearest_neighbors, smote, SmoteOutput, SyntheticOrigin};
pub use undersample::random_undersample;
pub use weights::{class_weights, sample_weights};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{config_err, Result};
use crate::net::SampleWeighting;
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceSpec {
    pub strategy: String,
    /// Per-class target counts by class name. Classes not listed use the
    /// count of `reference_class` (or the median class count if absent).
    pub targets: BTreeMap<String, usize>,
    pub reference_class: String,
    pub smote_k: usize,
    /// How weights from `sample_weights` enter training.
    pub sample_weighting: SampleWeighting,
}

impl Default for BalanceSpec {
    fn default() -> Self {
        Self {
            strategy: "none".into(),
            targets: BTreeMap::new(),
            reference_class: "PortScan".into(),
            smote_k: 5,
            sample_weighting: SampleWeighting::Loss,
        }
    }
}

impl BalanceSpec {
    pub fn with_strategy(strategy: &str) -> Self {
        Self {
            strategy: strategy.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.smote_k == 0 {
            return Err(config_err!("smote_k must be at least 1"));
        }
        if let Some((name, _)) = self.targets.iter().find(|(_, &t)| t == 0) {
            return Err(config_err!("target count for {name:?} must be positive"));
        }
        Ok(())
    }

    /// Per-class target counts for `ds`.
    pub fn resolve_targets(&self, ds: &Dataset) -> Result<Vec<usize>> {
        self.validate()?;
        if let Some(unknown) = self.targets.keys().find(|n| ds.class_index(n).is_none()) {
            return Err(config_err!("balance target names unknown class {unknown:?}"));
        }
        let counts = ds.class_counts();
        let default = match ds.class_index(&self.reference_class).map(|c| counts[c]) {
            Some(n) if n > 0 => n,
            _ => {
                let mut present: Vec<usize> = counts.iter().copied().filter(|&n| n > 0).collect();
                present.sort_unstable();
                let median = present.get(present.len() / 2).copied().unwrap_or(0);
                log::info!(
                    "reference class {:?} absent; balancing to median class count {median}",
                    self.reference_class
                );
                median
            }
        };
        Ok(ds
            .class_names
            .iter()
            .map(|name| self.targets.get(name).copied().unwrap_or(default))
            .collect())
    }
}

/// Training set after balancing, plus how to weight it.
#[derive(Debug, Clone)]
pub struct Balanced {
    pub dataset: Dataset,
    pub sample_weights: Option<Vec<f64>>,
    /// Overrides the trainer's weighting mode when weights are present.
    pub weighting: SampleWeighting,
    pub synthetic: Vec<SyntheticOrigin>,
}

impl Balanced {
    fn plain(dataset: Dataset) -> Self {
        Self {
            dataset,
            sample_weights: None,
            weighting: SampleWeighting::Loss,
            synthetic: Vec::new(),
        }
    }
}

pub trait BalanceStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, train: &Dataset, spec: &BalanceSpec, rng: &Rng) -> Result<Balanced>;
}

fn above(targets: &[usize], counts: &[usize]) -> Vec<Option<usize>> {
    targets.iter().zip(counts).map(|(&t, &n)| (n > t).then_some(t)).collect()
}

fn below(targets: &[usize], counts: &[usize]) -> Vec<Option<usize>> {
    targets.iter().zip(counts).map(|(&t, &n)| (n > 0 && n < t).then_some(t)).collect()
}

struct NoBalancing;
struct Undersample;
struct Smote;
struct SmoteUndersample;
struct ClassWeights;
struct SampleWeights;

impl BalanceStrategy for NoBalancing {
    fn name(&self) -> &'static str {
        "none"
    }
    fn apply(&self, train: &Dataset, _: &BalanceSpec, _: &Rng) -> Result<Balanced> {
        Ok(Balanced::plain(train.clone()))
    }
}

impl BalanceStrategy for Undersample {
    fn name(&self) -> &'static str {
        "undersample"
    }
    fn apply(&self, train: &Dataset, spec: &BalanceSpec, rng: &Rng) -> Result<Balanced> {
        let targets = spec.resolve_targets(train)?;
        let ds = random_undersample(train, &above(&targets, &train.class_counts()), &rng.derive("undersample"))?;
        Ok(Balanced::plain(ds))
    }
}

impl BalanceStrategy for Smote {
    fn name(&self) -> &'static str {
        "smote"
    }
    fn apply(&self, train: &Dataset, spec: &BalanceSpec, rng: &Rng) -> Result<Balanced> {
        let targets = spec.resolve_targets(train)?;
        let out = smote(train, &below(&targets, &train.class_counts()), spec.smote_k, &rng.derive("smote"))?;
        Ok(Balanced {
            synthetic: out.synthetic,
            ..Balanced::plain(out.dataset)
        })
    }
}

impl BalanceStrategy for SmoteUndersample {
    fn name(&self) -> &'static str {
        "smote+undersample"
    }
    fn apply(&self, train: &Dataset, spec: &BalanceSpec, rng: &Rng) -> Result<Balanced> {
        let targets = spec.resolve_targets(train)?;
        let counts = train.class_counts();
        let reduced = random_undersample(train, &above(&targets, &counts), &rng.derive("undersample"))?;
        let out = smote(&reduced, &below(&targets, &counts), spec.smote_k, &rng.derive("smote"))?;
        Ok(Balanced {
            synthetic: out.synthetic,
            ..Balanced::plain(out.dataset)
        })
    }
}

impl BalanceStrategy for ClassWeights {
    fn name(&self) -> &'static str {
        "class_weights"
    }
    fn apply(&self, train: &Dataset, _: &BalanceSpec, _: &Rng) -> Result<Balanced> {
        Ok(Balanced {
            sample_weights: Some(sample_weights(&train.labels, train.n_classes())?),
            ..Balanced::plain(train.clone())
        })
    }
}

impl BalanceStrategy for SampleWeights {
    fn name(&self) -> &'static str {
        "sample_weights"
    }
    fn apply(&self, train: &Dataset, spec: &BalanceSpec, _: &Rng) -> Result<Balanced> {
        Ok(Balanced {
            sample_weights: Some(sample_weights(&train.labels, train.n_classes())?),
            weighting: spec.sample_weighting,
            ..Balanced::plain(train.clone())
        })
    }
}

/// Balancing strategies by name.
pub struct BalanceRegistry {
    strategies: BTreeMap<&'static str, Box<dyn BalanceStrategy>>,
}

impl BalanceRegistry {
    pub fn empty() -> Self {
        Self {
            strategies: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(NoBalancing));
        r.register(Box::new(Undersample));
        r.register(Box::new(Smote));
        r.register(Box::new(SmoteUndersample));
        r.register(Box::new(ClassWeights));
        r.register(Box::new(SampleWeights));
        r
    }

    pub fn register(&mut self, strategy: Box<dyn BalanceStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn BalanceStrategy> {
        self.strategies
            .get(name)
            .map(|s| s.as_ref())
            .ok_or_else(|| config_err!("unknown balancing strategy {name:?}; known: {}", self.names().join(", ")))
    }
}

/// Applies `spec` with the built-in registry.
pub fn balance(train: &Dataset, spec: &BalanceSpec, rng: &Rng) -> Result<Balanced> {
    let strategy = BalanceRegistry::builtin();
    let strategy = strategy.get(&spec.strategy)?;
    let out = strategy.apply(train, spec, rng)?;
    log::info!(
        "balancing {:?}: {:?} -> {:?}",
        spec.strategy,
        train.class_counts(),
        out.dataset.class_counts()
    );
    Ok(out)
}
