//! Model kinds behind a common [`Classifier`] trait, created by name through
//! a [`ModelRegistry`]. Each kind can export its parameters as named tensors
//! and be rebuilt from them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dbn::{fine_tune, greedy_pretrain, DbnArchitecture, DbnModel, FineTuneConfig};
use crate::error::{config_err, Error, Result};
use crate::mlp::{mlp_train, MlpModel, MlpTrainConfig};
use crate::net::{argmax_rows, Activation, Dense, FeedForward, History, SampleWeighting};
use crate::numerics::{Matrix, Rng};
use crate::rbm::{CdConfig, RbmParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl NamedTensor {
    pub fn matrix(name: &str, m: &Matrix) -> Self {
        Self {
            name: name.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            values: m.as_slice().to_vec(),
        }
    }

    pub fn vector(name: &str, v: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            rows: 1,
            cols: v.len(),
            values: v.to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        Matrix::from_vec(self.rows, self.cols, self.values.clone())
    }
}

struct TensorSet(BTreeMap<String, NamedTensor>);

impl TensorSet {
    fn new(tensors: &[NamedTensor]) -> Self {
        Self(tensors.iter().map(|t| (t.name.clone(), t.clone())).collect())
    }

    fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let t = self
            .0
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
        if (t.rows, t.cols) != (rows, cols) {
            return Err(Error::Format(format!(
                "tensor {name} is {}x{}, expected {rows}x{cols}",
                t.rows, t.cols
            )));
        }
        t.to_matrix()
    }

    fn vector(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        Ok(self.matrix(name, 1, len)?.into_vec())
    }
}

/// Model choice and hyperparameters for every kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub kind: String,
    /// DBN hidden layer sizes (the input size comes from the data).
    pub hidden_layers: Vec<usize>,
    /// Optional check on the number of input features.
    pub input_size: Option<usize>,
    pub pretrain: CdConfig,
    pub finetune: FineTuneConfig,
    pub mlp: MlpTrainConfig,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            kind: "dbn".into(),
            hidden_layers: vec![128, 256, 128, 128, 64],
            input_size: None,
            pretrain: CdConfig::default(),
            finetune: FineTuneConfig::default(),
            mlp: MlpTrainConfig::default(),
        }
    }
}

pub struct TrainRequest<'a> {
    pub train: &'a Dataset,
    pub val: Option<&'a Dataset>,
    pub sample_weights: Option<&'a [f64]>,
    pub weighting: SampleWeighting,
    pub settings: &'a ModelSettings,
    pub rng: &'a Rng,
}

pub struct Trained {
    pub model: Box<dyn Classifier>,
    pub history: History,
    /// Per-layer, per-epoch reconstruction error (DBN only).
    pub pretrain_errors: Vec<Vec<f64>>,
}

pub trait Classifier: Send + Sync {
    fn kind(&self) -> &'static str;
    fn n_inputs(&self) -> usize;
    fn n_classes(&self) -> usize;
    /// Kind-specific shape description, persisted alongside the tensors.
    fn architecture(&self) -> serde_json::Value;
    fn predict_proba(&self, x: &Matrix) -> Result<Matrix>;
    fn tensors(&self) -> Vec<NamedTensor>;
    /// Rounds every parameter to the nearest `f32`.
    fn narrow_to_f32(&mut self);

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }
}

pub trait ModelFactory: Send + Sync {
    fn kind(&self) -> &'static str;
    fn train(&self, req: &TrainRequest) -> Result<Trained>;
    fn restore(&self, architecture: &serde_json::Value, tensors: &[NamedTensor]) -> Result<Box<dyn Classifier>>;
}

fn narrow(values: &mut [f64]) {
    for v in values {
        *v = *v as f32 as f64;
    }
}

fn check_input_size(settings: &ModelSettings, train: &Dataset) -> Result<()> {
    match settings.input_size {
        Some(n) if n != train.n_features() => Err(config_err!(
            "model.input_size is {n} but the training data has {} features",
            train.n_features()
        )),
        _ => Ok(()),
    }
}

impl Classifier for DbnModel {
    fn kind(&self) -> &'static str {
        "dbn"
    }
    fn n_inputs(&self) -> usize {
        self.architecture.layer_sizes[0]
    }
    fn n_classes(&self) -> usize {
        self.architecture.n_classes
    }
    fn architecture(&self) -> serde_json::Value {
        serde_json::to_value(&self.architecture).expect("architecture serialises")
    }
    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x)
    }
    fn tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (l, r) in self.rbms.iter().enumerate() {
            out.push(NamedTensor::matrix(&format!("rbm{l}.weights"), &r.weights));
            out.push(NamedTensor::vector(&format!("rbm{l}.visible_bias"), &r.visible_bias));
            out.push(NamedTensor::vector(&format!("rbm{l}.hidden_bias"), &r.hidden_bias));
        }
        if let Some(h) = &self.head {
            out.push(NamedTensor::matrix("head.weights", &h.weights));
            out.push(NamedTensor::vector("head.bias", &h.bias));
        }
        out
    }
    fn narrow_to_f32(&mut self) {
        for r in &mut self.rbms {
            narrow(r.weights.as_mut_slice());
            narrow(&mut r.visible_bias);
            narrow(&mut r.hidden_bias);
        }
        if let Some(h) = &mut self.head {
            narrow(h.weights.as_mut_slice());
            narrow(&mut h.bias);
        }
    }
}

struct DbnFactory;

impl ModelFactory for DbnFactory {
    fn kind(&self) -> &'static str {
        "dbn"
    }

    fn train(&self, req: &TrainRequest) -> Result<Trained> {
        check_input_size(req.settings, req.train)?;
        let mut layer_sizes = vec![req.train.n_features()];
        layer_sizes.extend(&req.settings.hidden_layers);
        let arch = DbnArchitecture {
            layer_sizes,
            n_classes: req.train.n_classes(),
        };
        let (mut model, pretrain_errors) =
            greedy_pretrain(arch, &req.train.features, &req.settings.pretrain, &req.rng.derive("pretrain"))?;
        let cfg = FineTuneConfig {
            sample_weighting: req.weighting,
            ..req.settings.finetune.clone()
        };
        let history = fine_tune(&mut model, req.train, req.val, req.sample_weights, &cfg, req.rng)?;
        Ok(Trained {
            model: Box::new(model),
            history,
            pretrain_errors,
        })
    }

    fn restore(&self, architecture: &serde_json::Value, tensors: &[NamedTensor]) -> Result<Box<dyn Classifier>> {
        let architecture: DbnArchitecture = serde_json::from_value(architecture.clone())
            .map_err(|e| Error::Format(format!("DBN architecture: {e}")))?;
        architecture.validate().map_err(|e| Error::Format(e.to_string()))?;
        let set = TensorSet::new(tensors);
        let mut rbms = Vec::new();
        for (l, w) in architecture.layer_sizes.windows(2).enumerate() {
            rbms.push(RbmParams::new(
                set.matrix(&format!("rbm{l}.weights"), w[0], w[1])?,
                set.vector(&format!("rbm{l}.visible_bias"), w[0])?,
                set.vector(&format!("rbm{l}.hidden_bias"), w[1])?,
            )?);
        }
        let last = *architecture.layer_sizes.last().expect("validated");
        let head = Dense {
            weights: set.matrix("head.weights", last, architecture.n_classes)?,
            bias: set.vector("head.bias", architecture.n_classes)?,
        };
        Ok(Box::new(DbnModel {
            architecture,
            rbms,
            head: Some(head),
            pretrained: true,
            fine_tuned: true,
        }))
    }
}

impl Classifier for MlpModel {
    fn kind(&self) -> &'static str {
        "mlp"
    }
    fn n_inputs(&self) -> usize {
        self.network.n_inputs()
    }
    fn n_classes(&self) -> usize {
        self.network.n_classes()
    }
    fn architecture(&self) -> serde_json::Value {
        serde_json::json!({ "layer_sizes": self.layer_sizes() })
    }
    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x)
    }
    fn tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (l, d) in self.network.layers.iter().enumerate() {
            out.push(NamedTensor::matrix(&format!("layer{l}.weights"), &d.weights));
            out.push(NamedTensor::vector(&format!("layer{l}.bias"), &d.bias));
        }
        out
    }
    fn narrow_to_f32(&mut self) {
        for d in &mut self.network.layers {
            narrow(d.weights.as_mut_slice());
            narrow(&mut d.bias);
        }
    }
}

struct MlpFactory;

#[derive(Deserialize)]
struct MlpArchitecture {
    layer_sizes: Vec<usize>,
}

impl ModelFactory for MlpFactory {
    fn kind(&self) -> &'static str {
        "mlp"
    }

    fn train(&self, req: &TrainRequest) -> Result<Trained> {
        check_input_size(req.settings, req.train)?;
        let cfg = MlpTrainConfig {
            sample_weighting: req.weighting,
            ..req.settings.mlp.clone()
        };
        let (model, history) = mlp_train(req.train, req.val, req.sample_weights, &cfg, req.rng)?;
        Ok(Trained {
            model: Box::new(model),
            history,
            pretrain_errors: Vec::new(),
        })
    }

    fn restore(&self, architecture: &serde_json::Value, tensors: &[NamedTensor]) -> Result<Box<dyn Classifier>> {
        let arch: MlpArchitecture = serde_json::from_value(architecture.clone())
            .map_err(|e| Error::Format(format!("MLP architecture: {e}")))?;
        if arch.layer_sizes.len() < 2 {
            return Err(Error::Format("MLP needs at least an input and an output layer".into()));
        }
        let set = TensorSet::new(tensors);
        let mut layers = Vec::new();
        for (l, w) in arch.layer_sizes.windows(2).enumerate() {
            layers.push(Dense {
                weights: set.matrix(&format!("layer{l}.weights"), w[0], w[1])?,
                bias: set.vector(&format!("layer{l}.bias"), w[1])?,
            });
        }
        let network = FeedForward::new(layers, Activation::Relu).map_err(|e| Error::Format(e.to_string()))?;
        Ok(Box::new(MlpModel { network }))
    }
}

/// Model factories by kind name.
pub struct ModelRegistry {
    factories: BTreeMap<&'static str, Box<dyn ModelFactory>>,
}

impl ModelRegistry {
    pub fn builtin() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register(Box::new(DbnFactory));
        r.register(Box::new(MlpFactory));
        r
    }

    pub fn register(&mut self, factory: Box<dyn ModelFactory>) {
        self.factories.insert(factory.kind(), factory);
    }

    pub fn kinds(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn get(&self, kind: &str) -> Result<&dyn ModelFactory> {
        self.factories
            .get(kind)
            .map(|f| f.as_ref())
            .ok_or_else(|| config_err!("unknown model kind {kind:?}; known: {}", self.kinds().join(", ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let n = 120;
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let features = Matrix::from_fn(n, 4, |r, c| {
            let centre = if c == labels[r] { 0.8 } else { 0.2 };
            (centre + 0.05 * rng.normal()).clamp(0.0, 1.0)
        });
        Dataset::new(
            features,
            labels,
            (0..4).map(|i| format!("f{i}")).collect(),
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap()
    }

    fn small_settings(kind: &str) -> ModelSettings {
        let mut s = ModelSettings {
            kind: kind.into(),
            hidden_layers: vec![6, 5],
            ..Default::default()
        };
        s.pretrain.epochs = 2;
        s.finetune.epochs = 3;
        s.mlp.hidden_layers = vec![5];
        s.mlp.epochs = 3;
        s
    }

    #[test]
    fn registry_kinds() {
        let r = ModelRegistry::builtin();
        assert_eq!(r.kinds(), vec!["dbn", "mlp"]);
        assert!(matches!(r.get("svm"), Err(Error::Config(_))));
    }

    #[test]
    fn export_restore_round_trip() {
        let ds = blobs(1);
        let registry = ModelRegistry::builtin();
        for kind in ["dbn", "mlp"] {
            let settings = small_settings(kind);
            let factory = registry.get(kind).unwrap();
            let req = TrainRequest {
                train: &ds,
                val: Some(&ds),
                sample_weights: None,
                weighting: SampleWeighting::Loss,
                settings: &settings,
                rng: &Rng::new(2),
            };
            let mut trained = factory.train(&req).unwrap();
            trained.model.narrow_to_f32();
            let restored = factory
                .restore(&trained.model.architecture(), &trained.model.tensors())
                .unwrap();
            assert_eq!(restored.kind(), kind);
            assert_eq!(restored.tensors(), trained.model.tensors());
            assert_eq!(
                restored.predict_proba(&ds.features).unwrap(),
                trained.model.predict_proba(&ds.features).unwrap()
            );
            assert!(trained
                .model
                .tensors()
                .iter()
                .flat_map(|t| &t.values)
                .all(|&v| v == v as f32 as f64));
        }
    }

    #[test]
    fn input_size_is_checked() {
        let ds = blobs(1);
        let settings = ModelSettings {
            input_size: Some(49),
            ..small_settings("mlp")
        };
        let req = TrainRequest {
            train: &ds,
            val: None,
            sample_weights: None,
            weighting: SampleWeighting::Loss,
            settings: &settings,
            rng: &Rng::new(0),
        };
        assert!(matches!(
            ModelRegistry::builtin().get("mlp").unwrap().train(&req),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn restore_rejects_bad_tensors() {
        let arch = serde_json::json!({ "layer_sizes": [3, 2] });
        let bad = vec![NamedTensor::vector("layer0.bias", &[0.0, 0.0])];
        assert!(matches!(
            ModelRegistry::builtin().get("mlp").unwrap().restore(&arch, &bad),
            Err(Error::Format(_))
        ));
    }
}
