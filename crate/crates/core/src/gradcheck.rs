//! Finite-difference checks of the hand-derived backward passes.

use serde::{Deserialize, Serialize};

use crate::dbn::{DbnArchitecture, DbnModel};
use crate::error::Result;
use crate::net::{gradient_check, Dense, FeedForward, GradCheck};
use crate::numerics::{Matrix, Rng};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckCase {
    pub name: String,
    pub check: GradCheck,
    pub passed: bool,
}

/// Shifts every parameter by a uniform offset so biases are non-zero.
fn jitter(net: &mut FeedForward, rng: &mut Rng) {
    let mut flat = net.flat_params();
    for p in &mut flat {
        *p += rng.uniform_in(-0.3, 0.3);
    }
    net.set_flat_params(&flat);
}

/// Unrolled DBN `[4, 3, 3]` with a 3-class head.
pub fn tiny_dbn(rng: &Rng) -> Result<FeedForward> {
    let arch = DbnArchitecture {
        layer_sizes: vec![4, 3, 3],
        n_classes: 3,
    };
    let mut model = DbnModel::initialise(arch, rng)?;
    model.head = Some(Dense::xavier(3, 3, &mut rng.derive("head")));
    let mut net = model.to_network()?;
    jitter(&mut net, &mut rng.derive("jitter"));
    Ok(net)
}

/// ReLU MLP `[4, 3, 3, 2]`.
pub fn tiny_mlp(rng: &Rng) -> Result<FeedForward> {
    let model = crate::mlp::MlpModel::initialise(4, &[3, 3], 2, rng)?;
    let mut net = model.network;
    jitter(&mut net, &mut rng.derive("jitter"));
    Ok(net)
}

fn run(name: &str, net: &FeedForward, rows: usize, weighted: bool, rng: &Rng) -> Result<GradCheckCase> {
    let mut r = rng.derive(name);
    let x = Matrix::from_fn(rows, net.n_inputs(), |_, _| r.uniform());
    let labels: Vec<usize> = (0..rows).map(|_| r.index(net.n_classes())).collect();
    let weights: Option<Vec<f64>> = weighted.then(|| (0..rows).map(|_| r.uniform_in(0.2, 5.0)).collect());
    let check = gradient_check(net, &x, &labels, weights.as_deref(), STEP)?;
    Ok(GradCheckCase {
        name: name.to_string(),
        passed: check.max_relative_error < TOLERANCE,
        check,
    })
}

/// DBN fine-tuning and MLP backprop against central differences, with and
/// without per-sample loss weights, on 5 samples each.
pub fn run_suite(seed: u64) -> Result<Vec<GradCheckCase>> {
    let rng = Rng::new(seed);
    let dbn = tiny_dbn(&rng.derive("dbn"))?;
    let mlp = tiny_mlp(&rng.derive("mlp"))?;
    Ok(vec![
        run("dbn[4,3,3]", &dbn, 5, false, &rng)?,
        run("dbn[4,3,3]/weighted", &dbn, 5, true, &rng)?,
        run("mlp[4,3,3,2]", &mlp, 5, false, &rng)?,
        run("mlp[4,3,3,2]/weighted", &mlp, 5, true, &rng)?,
    ])
}
