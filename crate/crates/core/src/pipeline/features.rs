use crate::dataset::Dataset;
use crate::error::{config_err, Result};

/// Removes features whose values are all identical (variance exactly zero).
pub fn drop_zero_variance(ds: &Dataset) -> (Dataset, Vec<String>) {
    let mut keep = Vec::new();
    let mut removed = Vec::new();
    for c in 0..ds.n_features() {
        let col = ds.features.column(c);
        let constant = col.first().is_none_or(|&first| col.iter().all(|&v| v == first));
        if constant {
            removed.push(ds.feature_names[c].clone());
        } else {
            keep.push(c);
        }
    }
    (ds.select_features(&keep), removed)
}

/// Absolute Pearson correlation between two columns; 0 if either is constant.
pub fn abs_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).abs().min(1.0)
}

/// Greedy first-kept-wins removal: scanning columns in order, a feature is
/// dropped when `|r| >= threshold` against any feature already kept.
pub fn drop_correlated(ds: &Dataset, threshold: f64) -> Result<(Dataset, Vec<String>)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(config_err!("correlation threshold {threshold} outside (0, 1]"));
    }
    let columns: Vec<Vec<f64>> = (0..ds.n_features()).map(|c| ds.features.column(c)).collect();
    let mut keep: Vec<usize> = Vec::new();
    let mut removed = Vec::new();
    for c in 0..columns.len() {
        let redundant = keep.iter().any(|&k| abs_pearson(&columns[k], &columns[c]) >= threshold);
        if redundant {
            removed.push(ds.feature_names[c].clone());
        } else {
            keep.push(c);
        }
    }
    Ok((ds.select_features(&keep), removed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, Rng};

    fn ds(cols: Vec<Vec<f64>>) -> Dataset {
        let rows = cols[0].len();
        Dataset::new(
            Matrix::from_fn(rows, cols.len(), |r, c| cols[c][r]),
            vec![0; rows],
            (0..cols.len()).map(|i| format!("f{i}")).collect(),
            vec!["a".into()],
        )
        .unwrap()
    }

    #[test]
    fn zero_variance_rule_is_exact() {
        let d = ds(vec![vec![3.0; 4], vec![1.0, 1.0, 1.0, 1.0 + 2e-15], vec![0.0, 1.0, 2.0, 3.0]]);
        let (out, removed) = drop_zero_variance(&d);
        assert_eq!(removed, vec!["f0"]);
        assert_eq!(out.feature_names, vec!["f1", "f2"]);
    }

    #[test]
    fn duplicate_column_is_removed() {
        let a = vec![1.0, 5.0, 2.0, 8.0, 3.0];
        let d = ds(vec![a.clone(), vec![0.0, 1.0, 0.0, 1.0, 1.0], a.iter().map(|x| -2.0 * x + 1.0).collect(), a]);
        let (out, removed) = drop_correlated(&d, 0.9).unwrap();
        assert_eq!(removed, vec!["f2", "f3"]);
        assert_eq!(out.feature_names, vec!["f0", "f1"]);
    }

    #[test]
    fn independent_columns_survive() {
        let mut rng = Rng::new(3);
        let cols: Vec<Vec<f64>> = (0..10).map(|_| (0..5000).map(|_| rng.normal()).collect()).collect();
        let (out, removed) = drop_correlated(&ds(cols), 0.9).unwrap();
        assert!(removed.is_empty());
        assert_eq!(out.n_features(), 10);
    }

    #[test]
    fn threshold_is_validated() {
        let d = ds(vec![vec![1.0, 2.0]]);
        assert!(drop_correlated(&d, 0.0).is_err());
        assert!(drop_correlated(&d, 1.5).is_err());
    }
}
