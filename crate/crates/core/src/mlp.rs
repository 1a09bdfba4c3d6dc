//! Baseline multi-layer perceptron: ReLU hidden layers, softmax output,
//! SGD with momentum.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{config_err, Result};
use crate::net::{self, Activation, Dense, FeedForward, History, OptimizerConfig, SampleWeighting, TrainConfig};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpTrainConfig {
    pub hidden_layers: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub sample_weighting: SampleWeighting,
    pub select_best: bool,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![64, 64],
            epochs: 10,
            learning_rate: 0.02,
            batch_size: 64,
            momentum: 0.9,
            sample_weighting: SampleWeighting::Loss,
            select_best: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub network: FeedForward,
}

impl MlpModel {
    /// Xavier weights, zero biases, for `n_in → hidden… → n_classes`.
    pub fn initialise(n_in: usize, hidden: &[usize], n_classes: usize, rng: &Rng) -> Result<Self> {
        if n_in == 0 || n_classes < 2 || hidden.contains(&0) {
            return Err(config_err!("invalid MLP shape {n_in} -> {hidden:?} -> {n_classes}"));
        }
        let sizes: Vec<usize> = std::iter::once(n_in)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(n_classes))
            .collect();
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| Dense::xavier(w[0], w[1], &mut rng.derive_indexed("mlp-init", l as u64)))
            .collect();
        Ok(Self {
            network: FeedForward::new(layers, Activation::Relu)?,
        })
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.network.forward(batch)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.network.n_inputs()];
        sizes.extend(self.network.layers.iter().map(Dense::n_out));
        sizes
    }
}

pub fn mlp_train(
    train: &Dataset,
    val: Option<&Dataset>,
    sample_weights: Option<&[f64]>,
    cfg: &MlpTrainConfig,
    rng: &Rng,
) -> Result<(MlpModel, History)> {
    let mut model = MlpModel::initialise(train.n_features(), &cfg.hidden_layers, train.n_classes(), rng)?;
    let history = mlp_fit(&mut model, train, val, sample_weights, cfg, rng)?;
    Ok((model, history))
}

/// Continues training an existing model.
pub fn mlp_fit(
    model: &mut MlpModel,
    train: &Dataset,
    val: Option<&Dataset>,
    sample_weights: Option<&[f64]>,
    cfg: &MlpTrainConfig,
    rng: &Rng,
) -> Result<History> {
    let tc = TrainConfig {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        optimizer: OptimizerConfig::Sgd { momentum: cfg.momentum },
        sample_weighting: cfg.sample_weighting,
        select_best: cfg.select_best,
    };
    net::train(&mut model.network, train, val, sample_weights, &tc, &rng.derive("mlp-train"))
}

/// Argmax class per row, ties to the lowest index.
pub fn mlp_predict(model: &MlpModel, batch: &Matrix) -> Result<Vec<usize>> {
    model.network.predict(batch)
}
