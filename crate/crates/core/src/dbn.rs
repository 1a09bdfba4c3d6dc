//! Deep belief network: a stack of RBMs pretrained greedily, then unrolled
//! into a sigmoid feed-forward classifier with a softmax head.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{config_err, Error, Result};
use crate::net::{self, Activation, Dense, FeedForward, History, OptimizerConfig, SampleWeighting, TrainConfig};
use crate::numerics::{Matrix, Rng};
use crate::rbm::{self, CdConfig, RbmParams};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbnArchitecture {
    /// Input size followed by each RBM's hidden size.
    pub layer_sizes: Vec<usize>,
    pub n_classes: usize,
}

impl Default for DbnArchitecture {
    fn default() -> Self {
        Self {
            layer_sizes: vec![49, 128, 256, 128, 128, 64],
            n_classes: 6,
        }
    }
}

impl DbnArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(config_err!("a DBN needs an input layer and at least one hidden layer"));
        }
        if self.layer_sizes.contains(&0) || self.n_classes < 2 {
            return Err(config_err!("layer sizes must be positive and there must be at least two classes"));
        }
        Ok(())
    }

    pub fn n_rbms(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel {
    pub architecture: DbnArchitecture,
    pub rbms: Vec<RbmParams>,
    pub head: Option<Dense>,
    pub pretrained: bool,
    pub fine_tuned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub sample_weighting: SampleWeighting,
    pub select_best: bool,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.001,
            batch_size: 128,
            optimizer: OptimizerConfig::adam(),
            sample_weighting: SampleWeighting::Loss,
            select_best: true,
        }
    }
}

impl FineTuneConfig {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            sample_weighting: self.sample_weighting,
            select_best: self.select_best,
        }
    }
}

impl DbnModel {
    /// Untrained stack: Xavier weights and zero biases for every RBM.
    pub fn initialise(architecture: DbnArchitecture, rng: &Rng) -> Result<Self> {
        architecture.validate()?;
        let rbms = architecture
            .layer_sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| RbmParams::xavier(w[0], w[1], &mut rng.derive_indexed("rbm-init", l as u64)))
            .collect();
        Ok(Self {
            architecture,
            rbms,
            head: None,
            pretrained: false,
            fine_tuned: false,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.architecture.layer_sizes[0]
    }

    /// The unrolled classifier: each RBM's `(W, c)` as a sigmoid layer, then the head.
    /// Visible biases take no part in the feed-forward pass.
    pub fn to_network(&self) -> Result<FeedForward> {
        let head = self
            .head
            .clone()
            .ok_or_else(|| Error::State("DBN classification head is not initialised".into()))?;
        let mut layers: Vec<Dense> = self
            .rbms
            .iter()
            .map(|r| Dense {
                weights: r.weights.clone(),
                bias: r.hidden_bias.clone(),
            })
            .collect();
        layers.push(head);
        FeedForward::new(layers, Activation::Sigmoid)
    }

    fn absorb_network(&mut self, net: FeedForward) {
        let mut layers = net.layers.into_iter();
        for rbm in &mut self.rbms {
            let layer = layers.next().expect("one layer per RBM");
            rbm.weights = layer.weights;
            rbm.hidden_bias = layer.bias;
        }
        self.head = layers.next();
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.to_network()?.forward(batch)
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Vec<usize>> {
        self.to_network()?.predict(batch)
    }

    /// Deterministic hidden representation after the first `depth` RBMs.
    pub fn represent(&self, batch: &Matrix, depth: usize) -> Result<Matrix> {
        let mut x = batch.clone();
        for rbm in &self.rbms[..depth] {
            x = rbm.prop_up(&x)?;
        }
        Ok(x)
    }
}

/// Greedy layer-wise pretraining.
///
/// RBM `l` is initialised from `rng.derive_indexed("rbm-init", l)`, trained
/// with `rng.derive_indexed("rbm-train", l)`, and sees the hidden
/// probabilities of RBM `l - 1` as its data. Returns the model and each
/// layer's reconstruction-error history.
pub fn greedy_pretrain(
    architecture: DbnArchitecture,
    data: &Matrix,
    cd: &CdConfig,
    rng: &Rng,
) -> Result<(DbnModel, Vec<Vec<f64>>)> {
    let mut model = DbnModel::initialise(architecture, rng)?;
    if data.cols() != model.n_inputs() {
        return Err(config_err!(
            "data has {} features but the DBN input layer has {}",
            data.cols(),
            model.n_inputs()
        ));
    }
    let mut histories = Vec::with_capacity(model.rbms.len());
    let mut representation = data.clone();
    for l in 0..model.rbms.len() {
        let history = rbm::pretrain(
            &mut model.rbms[l],
            &representation,
            cd,
            &rng.derive_indexed("rbm-train", l as u64),
        )?;
        log::info!(
            "pretrained RBM {l} ({}x{}), final reconstruction mse {:?}",
            model.rbms[l].n_visible(),
            model.rbms[l].n_hidden(),
            history.last()
        );
        histories.push(history);
        if l + 1 < model.rbms.len() {
            representation = model.rbms[l].prop_up(&representation)?;
        }
    }
    model.pretrained = true;
    Ok((model, histories))
}

/// Supervised fine-tuning of the whole unrolled stack.
///
/// A missing head is Xavier-initialised from `rng.derive("head")`.
pub fn fine_tune(
    model: &mut DbnModel,
    train: &Dataset,
    val: Option<&Dataset>,
    sample_weights: Option<&[f64]>,
    cfg: &FineTuneConfig,
    rng: &Rng,
) -> Result<History> {
    if train.n_classes() != model.architecture.n_classes {
        return Err(config_err!(
            "dataset has {} classes but the DBN head has {}",
            train.n_classes(),
            model.architecture.n_classes
        ));
    }
    if model.head.is_none() {
        let last = *model.architecture.layer_sizes.last().expect("validated");
        model.head = Some(Dense::xavier(last, model.architecture.n_classes, &mut rng.derive("head")));
    }
    let mut network = model.to_network()?;
    let history = net::train(
        &mut network,
        train,
        val,
        sample_weights,
        &cfg.train_config(),
        &rng.derive("fine-tune"),
    )?;
    model.absorb_network(network);
    model.fine_tuned = true;
    Ok(history)
}
