//! Restricted Boltzmann machine with binary hidden units.
//!
//! Visible units take values in `[0, 1]`, read as activation probabilities,
//! so quantile-transformed flow features can be fed in directly. The energy
//! of a joint configuration is
//!
//! ```text
//! E(v, h) = -Σᵢ bᵢvᵢ - Σⱼ cⱼhⱼ - Σᵢⱼ vᵢ hⱼ wᵢⱼ
//! ```
//!
//! Training uses k-step contrastive divergence with momentum. The exact
//! quantities (partition function, marginals) are only available for tiny
//! models and exist to validate the sampler and the update rule.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numerics::{bernoulli_sample, log_sum_exp, sigmoid, xavier_init, Matrix, Rng};

/// Largest `n_visible + n_hidden` for which exact enumeration is allowed.
pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    /// `n_visible × n_hidden`.
    pub weights: Matrix,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl RbmParams {
    pub fn new(weights: Matrix, visible_bias: Vec<f64>, hidden_bias: Vec<f64>) -> Result<Self> {
        let p = Self {
            weights,
            visible_bias,
            hidden_bias,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            weights: Matrix::zeros(n_visible, n_hidden),
            visible_bias: vec![0.0; n_visible],
            hidden_bias: vec![0.0; n_hidden],
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier(n_visible: usize, n_hidden: usize, rng: &mut Rng) -> Self {
        Self {
            weights: xavier_init(n_visible, n_hidden, rng),
            visible_bias: vec![0.0; n_visible],
            hidden_bias: vec![0.0; n_hidden],
        }
    }

    pub fn n_visible(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.visible_bias.len() != self.n_visible() || self.hidden_bias.len() != self.n_hidden()
        {
            return Err(shape_err!(
                "weights {:?} with visible bias {} and hidden bias {}",
                self.weights.shape(),
                self.visible_bias.len(),
                self.hidden_bias.len()
            ));
        }
        let finite = self.weights.is_finite()
            && self.visible_bias.iter().all(|x| x.is_finite())
            && self.hidden_bias.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::Domain("non-finite RBM parameter".into()));
        }
        Ok(())
    }

    /// Energy of the joint configuration `(v, h)`.
    pub fn energy(&self, v: &[f64], h: &[f64]) -> Result<f64> {
        self.check_pair(v, h)?;
        let visible: f64 = self.visible_bias.iter().zip(v).map(|(b, x)| b * x).sum();
        let hidden: f64 = self.hidden_bias.iter().zip(h).map(|(c, x)| c * x).sum();
        let mut interaction = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (j, &hj) in h.iter().enumerate() {
                interaction += vi * hj * self.weights[(i, j)];
            }
        }
        Ok(-visible - hidden - interaction)
    }

    /// `ln Σ_h exp(-E(v, h))`, summing the hidden layer out analytically.
    pub fn log_unnormalised_marginal(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.n_visible() {
            return Err(shape_err!("visible vector of length {}, expected {}", v.len(), self.n_visible()));
        }
        let visible: f64 = self.visible_bias.iter().zip(v).map(|(b, x)| b * x).sum();
        let mut total = visible;
        for j in 0..self.n_hidden() {
            let mut a = self.hidden_bias[j];
            for (i, &vi) in v.iter().enumerate() {
                a += vi * self.weights[(i, j)];
            }
            total += softplus(a);
        }
        Ok(total)
    }

    /// `ln Z`, exact by enumerating every visible state.
    pub fn log_partition(&self) -> Result<f64> {
        self.check_enumerable()?;
        let terms = binary_states(self.n_visible())
            .map(|v| self.log_unnormalised_marginal(&v))
            .collect::<Result<Vec<_>>>()?;
        Ok(log_sum_exp(&terms))
    }

    pub fn partition_function(&self) -> Result<f64> {
        Ok(self.log_partition()?.exp())
    }

    /// `p(v, h) = exp(-E(v, h)) / Z`.
    pub fn joint_probability(&self, v: &[f64], h: &[f64]) -> Result<f64> {
        let log_z = self.log_partition()?;
        Ok((-self.energy(v, h)? - log_z).exp())
    }

    /// `p(v)` with the hidden layer marginalised out.
    pub fn marginal_v(&self, v: &[f64]) -> Result<f64> {
        let log_z = self.log_partition()?;
        Ok((self.log_unnormalised_marginal(v)? - log_z).exp())
    }

    /// Hidden activation probabilities `sigmoid(c + vW)` for each row of `v`.
    pub fn prop_up(&self, v: &Matrix) -> Result<Matrix> {
        let mut a = v.matmul(&self.weights)?;
        a.add_row_broadcast(&self.hidden_bias)?;
        Ok(sigmoid(&a))
    }

    /// Visible activation probabilities `sigmoid(b + hWᵀ)` for each row of `h`.
    pub fn prop_down(&self, h: &Matrix) -> Result<Matrix> {
        let mut a = h.matmul_t(&self.weights)?;
        a.add_row_broadcast(&self.visible_bias)?;
        Ok(sigmoid(&a))
    }

    fn check_pair(&self, v: &[f64], h: &[f64]) -> Result<()> {
        if v.len() != self.n_visible() || h.len() != self.n_hidden() {
            return Err(shape_err!(
                "configuration ({}, {}) for an RBM of shape ({}, {})",
                v.len(),
                h.len(),
                self.n_visible(),
                self.n_hidden()
            ));
        }
        Ok(())
    }

    fn check_enumerable(&self) -> Result<()> {
        let units = self.n_visible() + self.n_hidden();
        if units > ENUMERATION_LIMIT {
            return Err(Error::Capacity(format!(
                "{units} units exceed the enumeration limit of {ENUMERATION_LIMIT}"
            )));
        }
        Ok(())
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Every binary vector of length `n`, in counting order (unit 0 is the low bit).
pub fn binary_states(n: usize) -> impl Iterator<Item = Vec<f64>> {
    (0u64..1 << n).map(move |bits| (0..n).map(|i| ((bits >> i) & 1) as f64).collect())
}

/// Contrastive divergence settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdConfig {
    /// Gibbs steps per update.
    pub k: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            k: 1,
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 64,
            epochs: 10,
        }
    }
}

impl CdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("CD needs at least one Gibbs step".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid CD learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Output of a k-step Gibbs chain started at the data.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    /// `p(h | v₀)`.
    pub h0_probs: Matrix,
    /// First reconstruction `p(v | h₀ sample)`.
    pub v1_probs: Matrix,
    /// Visible probabilities after `k` steps.
    pub vk_probs: Matrix,
    /// `p(h | v_k probabilities)`.
    pub hk_probs: Matrix,
}

/// Runs `k` alternating steps from `v0`.
///
/// Hidden states are sampled at every step. Intermediate visible states are
/// sampled too; the final step keeps probabilities on both layers.
pub fn gibbs_chain(params: &RbmParams, v0: &Matrix, k: usize, rng: &mut Rng) -> Result<GibbsChain> {
    if k == 0 {
        return Err(Error::Domain("Gibbs chain needs k >= 1".into()));
    }
    let h0_probs = params.prop_up(v0)?;
    let mut h = bernoulli_sample(&h0_probs, rng)?;
    let mut v1_probs = None;
    for step in 1..=k {
        let v_probs = params.prop_down(&h)?;
        if v1_probs.is_none() {
            v1_probs = Some(v_probs.clone());
        }
        if step == k {
            let hk_probs = params.prop_up(&v_probs)?;
            return Ok(GibbsChain {
                h0_probs,
                v1_probs: v1_probs.expect("set on first step"),
                vk_probs: v_probs,
                hk_probs,
            });
        }
        let v = bernoulli_sample(&v_probs, rng)?;
        h = bernoulli_sample(&params.prop_up(&v)?, rng)?;
    }
    unreachable!("loop returns on its last step")
}

/// A direction in RBM parameter space (gradient estimate or momentum buffer).
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGradient {
    pub weights: Matrix,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl RbmGradient {
    pub fn zeros_like(params: &RbmParams) -> Self {
        Self {
            weights: Matrix::zeros(params.n_visible(), params.n_hidden()),
            visible_bias: vec![0.0; params.n_visible()],
            hidden_bias: vec![0.0; params.n_hidden()],
        }
    }

    /// All components flattened as `[W row-major, b, c]`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.weights.as_slice().to_vec();
        out.extend_from_slice(&self.visible_bias);
        out.extend_from_slice(&self.hidden_bias);
        out
    }
}

/// Positive minus negative phase statistics, averaged over the batch.
///
/// Both phases use hidden probabilities rather than samples.
pub fn cd_gradient(v0: &Matrix, chain: &GibbsChain) -> Result<RbmGradient> {
    let n = v0.rows();
    if n == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    let inv = 1.0 / n as f64;
    let positive = v0.t_matmul(&chain.h0_probs)?;
    let negative = chain.vk_probs.t_matmul(&chain.hk_probs)?;
    let weights = positive.sub(&negative)?.scale(inv);
    let mean_diff = |a: &Matrix, b: &Matrix| -> Vec<f64> {
        a.column_sums()
            .iter()
            .zip(b.column_sums())
            .map(|(x, y)| (x - y) * inv)
            .collect()
    };
    Ok(RbmGradient {
        weights,
        visible_bias: mean_diff(v0, &chain.vk_probs),
        hidden_bias: mean_diff(&chain.h0_probs, &chain.hk_probs),
    })
}

/// One contrastive-divergence step with momentum on a mini-batch.
///
/// `velocity ← momentum·velocity + ε·Δ`, then `params ← params + velocity`.
/// Returns the batch's mean squared reconstruction error between `v₀` and the
/// first reconstruction.
pub fn cd_update(
    params: &mut RbmParams,
    batch: &Matrix,
    cfg: &CdConfig,
    velocity: &mut RbmGradient,
    rng: &mut Rng,
) -> Result<f64> {
    if batch.rows() == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    if batch.cols() != params.n_visible() {
        return Err(shape_err!(
            "batch has {} columns, RBM has {} visible units",
            batch.cols(),
            params.n_visible()
        ));
    }
    check_unit_interval(batch)?;
    let chain = gibbs_chain(params, batch, cfg.k, rng)?;
    let grad = cd_gradient(batch, &chain)?;

    let eps = cfg.learning_rate;
    let m = cfg.momentum;
    for (vel, g) in velocity.weights.as_mut_slice().iter_mut().zip(grad.weights.as_slice()) {
        *vel = m * *vel + eps * g;
    }
    for (vel, g) in velocity.visible_bias.iter_mut().zip(&grad.visible_bias) {
        *vel = m * *vel + eps * g;
    }
    for (vel, g) in velocity.hidden_bias.iter_mut().zip(&grad.hidden_bias) {
        *vel = m * *vel + eps * g;
    }
    for (w, vel) in params.weights.as_mut_slice().iter_mut().zip(velocity.weights.as_slice()) {
        *w += vel;
    }
    for (b, vel) in params.visible_bias.iter_mut().zip(&velocity.visible_bias) {
        *b += vel;
    }
    for (c, vel) in params.hidden_bias.iter_mut().zip(&velocity.hidden_bias) {
        *c += vel;
    }
    params.validate()?;

    let sq: f64 = batch
        .as_slice()
        .iter()
        .zip(chain.v1_probs.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(sq / batch.as_slice().len() as f64)
}

/// Trains `params` for `cfg.epochs` passes of shuffled mini-batches.
///
/// Each epoch's permutation and sampling noise come from streams derived from
/// `(rng seed, epoch)`. Returns the mean squared reconstruction error per
/// epoch. A trailing partial batch is used as-is.
pub fn pretrain(params: &mut RbmParams, data: &Matrix, cfg: &CdConfig, rng: &Rng) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }
    if data.rows() == 0 {
        return Err(Error::Domain("no training rows".into()));
    }
    check_unit_interval(data)?;
    let mut velocity = RbmGradient::zeros_like(params);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = rng.derive_indexed("shuffle", epoch as u64).permutation(data.rows());
        let mut gibbs = rng.derive_indexed("gibbs", epoch as u64);
        let mut weighted_err = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select_rows(chunk);
            let err = cd_update(params, &batch, cfg, &mut velocity, &mut gibbs)?;
            weighted_err += err * chunk.len() as f64;
        }
        let mse = weighted_err / data.rows() as f64;
        log::debug!("rbm {}x{} epoch {epoch}: reconstruction mse {mse:.6}", params.n_visible(), params.n_hidden());
        history.push(mse);
    }
    Ok(history)
}

fn check_unit_interval(m: &Matrix) -> Result<()> {
    if let Some(x) = m.as_slice().iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Domain(format!("visible value {x} outside [0, 1]")));
    }
    Ok(())
}
