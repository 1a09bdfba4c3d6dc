//! Labelled Gaussian-blob data for controlled experiments.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{config_err, Result};
use crate::numerics::{Matrix, Rng};
use crate::pipeline::CATEGORIES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlobSpec {
    /// Rows per class; classes are named after the six merged categories
    /// when there are six of them.
    pub counts: Vec<usize>,
    pub dims: usize,
    /// Class `c`'s centre is `separation` on every dimension `d` with
    /// `d % classes == c` and 0 elsewhere, so centres are (near) equidistant.
    pub separation: f64,
    /// Standard deviation of the isotropic noise.
    pub noise: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            counts: vec![3000, 30, 600, 1500, 570, 300],
            dims: 49,
            separation: 2.0,
            noise: 1.0,
        }
    }
}

pub fn gaussian_blobs(spec: &BlobSpec, rng: &Rng) -> Result<Dataset> {
    if spec.counts.is_empty() || spec.dims == 0 || !(spec.noise >= 0.0) {
        return Err(config_err!("invalid blob spec {spec:?}"));
    }
    let k = spec.counts.len();
    let class_names: Vec<String> = if k == CATEGORIES.len() {
        CATEGORIES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..k).map(|c| format!("class{c}")).collect()
    };
    let centres: Vec<Vec<f64>> = (0..k)
        .map(|c| (0..spec.dims).map(|d| if d % k == c { spec.separation } else { 0.0 }).collect())
        .collect();
    let n: usize = spec.counts.iter().sum();
    let mut labels = Vec::with_capacity(n);
    for (c, &count) in spec.counts.iter().enumerate() {
        labels.extend(std::iter::repeat_n(c, count));
    }
    // Interleave classes so row order carries no label information.
    rng.derive("order").shuffle(&mut labels);
    let mut noise = rng.derive("noise");
    let features = Matrix::from_fn(n, spec.dims, |r, d| centres[labels[r]][d] + spec.noise * noise.normal());
    Dataset::new(features, labels, (1..=spec.dims).map(|i| format!("f{i}")).collect(), class_names)
}
