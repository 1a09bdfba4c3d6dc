use crate::error::{data_err, Result};

/// `w_c = N / (C · n_c)`, so that `Σ_c w_c · n_c = N`.
pub fn class_weights(counts: &[usize]) -> Result<Vec<f64>> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(data_err!("class {c} has no samples; class weights are undefined"));
    }
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    Ok(counts.iter().map(|&n| total as f64 / (k * n as f64)).collect())
}

/// Each sample carries its class's weight.
pub fn sample_weights(labels: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(data_err!("label {l} out of range for {n_classes} classes"));
        }
        counts[l] += 1;
    }
    let w = class_weights(&counts)?;
    Ok(labels.iter().map(|&l| w[l]).collect())
}
