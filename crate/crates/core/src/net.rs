//! Feed-forward softmax classifiers with hand-derived backpropagation.
//!
//! Shared by the fine-tuned DBN (sigmoid hidden layers) and the MLP baseline
//! (ReLU hidden layers). The output layer is always linear followed by
//! softmax, trained on per-sample weighted cross-entropy
//! `L = (1/n) Σᵢ wᵢ · (-ln p(yᵢ | xᵢ))`.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{data_err, shape_err, Error, Result};
use crate::eval::evaluate_labels;
use crate::numerics::{log_sum_exp, softmax_rows, xavier_init, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Activation {
    fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Sigmoid => crate::numerics::sigmoid(z),
            Activation::Relu => crate::numerics::relu(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and activation `a`.
    /// ReLU's derivative at exactly 0 is 0.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected layer computing `x · weights + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `n_in × n_out`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn xavier(n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        Self {
            weights: xavier_init(n_in, n_out, rng),
            bias: vec![0.0; n_out],
        }
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(n_in, n_out),
            bias: vec![0.0; n_out],
        }
    }

    pub fn n_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_out(&self) -> usize {
        self.weights.cols()
    }

    fn affine(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&self.weights)?;
        z.add_row_broadcast(&self.bias)?;
        Ok(z)
    }

    fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub layers: Vec<Dense>,
    pub hidden_activation: Activation,
}

struct Trace {
    /// Input followed by each hidden activation.
    activations: Vec<Matrix>,
    /// Hidden pre-activations.
    pre: Vec<Matrix>,
    logits: Matrix,
}

impl FeedForward {
    pub fn new(layers: Vec<Dense>, hidden_activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(shape_err!(
                    "layer output {} does not feed layer input {}",
                    pair[0].n_out(),
                    pair[1].n_in()
                ));
            }
        }
        Ok(Self {
            layers,
            hidden_activation,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().expect("non-empty").n_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    fn trace(&self, x: &Matrix) -> Result<Trace> {
        if x.cols() != self.n_inputs() {
            return Err(shape_err!("input has {} columns, network expects {}", x.cols(), self.n_inputs()));
        }
        let (hidden, head) = self.layers.split_at(self.layers.len() - 1);
        let mut activations = vec![x.clone()];
        let mut pre = Vec::with_capacity(hidden.len());
        for layer in hidden {
            let z = layer.affine(activations.last().expect("non-empty"))?;
            activations.push(self.hidden_activation.apply(&z));
            pre.push(z);
        }
        let logits = head[0].affine(activations.last().expect("non-empty"))?;
        Ok(Trace {
            activations,
            pre,
            logits,
        })
    }

    /// Class probabilities, one row per input row.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(softmax_rows(&self.trace(x)?.logits))
    }

    /// Argmax of `forward`; ties go to the lowest class index.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward(x)?))
    }

    /// Weighted mean cross-entropy.
    pub fn loss(&self, x: &Matrix, labels: &[usize], weights: Option<&[f64]>) -> Result<f64> {
        check_targets(x, labels, weights, self.n_classes())?;
        let logits = self.trace(x)?.logits;
        Ok(cross_entropy(&logits, labels, weights))
    }

    /// Loss and its gradient with respect to every layer's parameters.
    pub fn loss_and_gradients(
        &self,
        x: &Matrix,
        labels: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<(f64, Vec<Dense>)> {
        check_targets(x, labels, weights, self.n_classes())?;
        let trace = self.trace(x)?;
        let loss = cross_entropy(&trace.logits, labels, weights);
        let n = x.rows() as f64;

        // Softmax + cross-entropy: dL/dz = w·(p - onehot)/n.
        let mut delta = softmax_rows(&trace.logits);
        for (r, &y) in labels.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[r]);
            let row = delta.row_mut(r);
            row[y] -= 1.0;
            row.iter_mut().for_each(|d| *d *= w / n);
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = &trace.activations[l];
            grads.push(Dense {
                weights: input.t_matmul(&delta)?,
                bias: delta.column_sums(),
            });
            if l == 0 {
                break;
            }
            let mut back = delta.matmul_t(&self.layers[l].weights)?;
            let z = &trace.pre[l - 1];
            let a = &trace.activations[l];
            for ((d, &zv), &av) in back.as_mut_slice().iter_mut().zip(z.as_slice()).zip(a.as_slice()) {
                *d *= self.hidden_activation.derivative(zv, av);
            }
            delta = back;
        }
        grads.reverse();
        Ok((loss, grads))
    }

    /// Flat view of all parameters, `[W₀, b₀, W₁, b₁, ...]`.
    pub fn flat_params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut offset = 0;
        for layer in &mut self.layers {
            let w = layer.weights.as_mut_slice();
            w.copy_from_slice(&flat[offset..offset + w.len()]);
            offset += w.len();
            let b = &mut layer.bias;
            let len = b.len();
            b.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
    }
}

pub fn flatten_layers(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weights.as_slice());
        out.extend_from_slice(&l.bias);
    }
    out
}

pub fn argmax_rows(probs: &Matrix) -> Vec<usize> {
    probs
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn check_targets(x: &Matrix, labels: &[usize], weights: Option<&[f64]>, n_classes: usize) -> Result<()> {
    if x.rows() != labels.len() {
        return Err(shape_err!("{} rows but {} labels", x.rows(), labels.len()));
    }
    if x.rows() == 0 {
        return Err(data_err!("empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(data_err!("label {bad} out of range for {n_classes} classes"));
    }
    if let Some(w) = weights {
        if w.len() != labels.len() {
            return Err(shape_err!("{} weights for {} samples", w.len(), labels.len()));
        }
    }
    Ok(())
}

fn cross_entropy(logits: &Matrix, labels: &[usize], weights: Option<&[f64]>) -> f64 {
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let nll = log_sum_exp(row) - row[y];
        total += weights.map_or(1.0, |w| w[r]) * nll;
    }
    total / labels.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd { momentum: f64 },
}

impl OptimizerConfig {
    pub fn adam() -> Self {
        OptimizerConfig::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn build(&self, param_count: usize) -> Box<dyn Optimizer> {
        match *self {
            OptimizerConfig::Adam { beta1, beta2, epsilon } => Box::new(Adam {
                beta1,
                beta2,
                epsilon,
                m: vec![0.0; param_count],
                v: vec![0.0; param_count],
                t: 0,
            }),
            OptimizerConfig::Sgd { momentum } => Box::new(SgdMomentum {
                momentum,
                velocity: vec![0.0; param_count],
            }),
        }
    }
}

/// Updates a flat parameter vector in place from a flat gradient.
pub trait Optimizer {
    fn step(&mut self, params: &mut [f64], grads: &[f64], learning_rate: f64);
}

struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// `v ← μv − ηg`, `θ ← θ + v`.
struct SgdMomentum {
    momentum: f64,
    velocity: Vec<f64>,
}

impl Optimizer for SgdMomentum {
    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        for i in 0..params.len() {
            self.velocity[i] = self.momentum * self.velocity[i] - lr * grads[i];
            params[i] += self.velocity[i];
        }
    }
}

/// How per-sample weights enter training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleWeighting {
    /// Scale each sample's loss contribution.
    #[default]
    Loss,
    /// Draw each epoch's samples with probability proportional to weight.
    BatchSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub sample_weighting: SampleWeighting,
    /// Keep the parameters of the epoch with the best validation macro-F1.
    pub select_best: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Full-training-set loss after the epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_macro_f1: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub selected_epoch: Option<usize>,
}

/// Mini-batch training of `net` in place.
///
/// Epoch `e` shuffles (or weight-samples) rows with a stream derived from
/// `(rng seed, e)`.
pub fn train(
    net: &mut FeedForward,
    train: &Dataset,
    val: Option<&Dataset>,
    weights: Option<&[f64]>,
    cfg: &TrainConfig,
    rng: &Rng,
) -> Result<History> {
    cfg.validate()?;
    let n = train.n_rows();
    check_targets(&train.features, &train.labels, weights, net.n_classes())?;
    if let Some(v) = val {
        if v.n_rows() > 0 {
            check_targets(&v.features, &v.labels, None, net.n_classes())?;
        }
    }
    if let Some(w) = weights {
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(data_err!("sample weights must be finite and non-negative"));
        }
    }
    let sampled = weights.is_some() && cfg.sample_weighting == SampleWeighting::BatchSampling;
    let loss_weights = if sampled { None } else { weights };
    let sampler = if sampled {
        Some(CumulativeSampler::new(weights.expect("checked")))
    } else {
        None
    };

    let mut params = net.flat_params();
    let mut opt = cfg.optimizer.build(params.len());
    let mut history = History::default();
    let mut best: Option<(f64, Vec<f64>)> = None;

    for epoch in 0..cfg.epochs {
        let mut order_rng = rng.derive_indexed("epoch", epoch as u64);
        let order: Vec<usize> = match &sampler {
            Some(s) => (0..n).map(|_| s.draw(&mut order_rng)).collect(),
            None => order_rng.permutation(n),
        };
        for chunk in order.chunks(cfg.batch_size) {
            let x = train.features.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let w: Option<Vec<f64>> = loss_weights.map(|w| chunk.iter().map(|&i| w[i]).collect());
            let (_, grads) = net.loss_and_gradients(&x, &y, w.as_deref())?;
            opt.step(&mut params, &flatten_layers(&grads), cfg.learning_rate);
            net.set_flat_params(&params);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain(format!("training diverged in epoch {epoch}")));
        }

        let train_loss = net.loss(&train.features, &train.labels, loss_weights)?;
        let mut record = EpochRecord {
            epoch,
            train_loss,
            val_loss: None,
            val_macro_f1: None,
            val_accuracy: None,
        };
        if let Some(v) = val.filter(|v| v.n_rows() > 0) {
            let pred = net.predict(&v.features)?;
            let report = evaluate_labels(&v.labels, &pred, &v.class_names)?;
            record.val_loss = Some(net.loss(&v.features, &v.labels, None)?);
            record.val_macro_f1 = Some(report.macro_avg.f1);
            record.val_accuracy = Some(report.accuracy);
            if cfg.select_best && best.as_ref().is_none_or(|(f1, _)| report.macro_avg.f1 > *f1) {
                best = Some((report.macro_avg.f1, params.clone()));
                history.selected_epoch = Some(epoch);
            }
        }
        log::debug!(
            "epoch {epoch}: train loss {:.5}, val macro-F1 {:?}",
            record.train_loss,
            record.val_macro_f1
        );
        history.epochs.push(record);
    }

    match best {
        Some((_, p)) => net.set_flat_params(&p),
        None => history.selected_epoch = cfg.epochs.checked_sub(1),
    }
    Ok(history)
}

/// Draws indices with probability proportional to weight.
struct CumulativeSampler {
    cumulative: Vec<f64>,
}

impl CumulativeSampler {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn draw(&self, rng: &mut Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.uniform() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Central finite-difference check of `loss_and_gradients`.
///
/// Relative error per parameter is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(
    net: &FeedForward,
    x: &Matrix,
    labels: &[usize],
    weights: Option<&[f64]>,
    step: f64,
) -> Result<GradCheck> {
    let (_, grads) = net.loss_and_gradients(x, labels, weights)?;
    let analytic = flatten_layers(&grads);
    let base = net.flat_params();
    let mut probe = net.clone();
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + step;
        probe.set_flat_params(&p);
        let plus = probe.loss(x, labels, weights)?;
        p[i] = base[i] - step;
        probe.set_flat_params(&p);
        let minus = probe.loss(x, labels, weights)?;
        let numeric = (plus - minus) / (2.0 * step);
        let abs = (analytic[i] - numeric).abs();
        let rel = abs / analytic[i].abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
        max_abs = max_abs.max(abs);
    }
    Ok(GradCheck {
        parameters: base.len(),
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub parameters: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
}
