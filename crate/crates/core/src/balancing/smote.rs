use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{config_err, shape_err, Result};
use crate::numerics::{Matrix, Rng};

/// Where a synthetic row came from: `row = parent + gap · (neighbor - parent)`.
/// Originals keep their positions, so `parent` and `neighbor` index both the
/// input and the output dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOrigin {
    /// Row index in the output dataset.
    pub row: usize,
    pub parent: usize,
    pub neighbor: usize,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SmoteOutput {
    pub dataset: Dataset,
    pub synthetic: Vec<SyntheticOrigin>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest members of `members` to `members[i]` (excluding itself),
/// by Euclidean distance; ties broken by lower row index.
pub fn nearest_neighbors(x: &Matrix, members: &[usize], i: usize, k: usize) -> Vec<usize> {
    let origin = x.row(members[i]);
    let mut cand: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &m)| (squared_distance(origin, x.row(m)), m))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(k);
    cand.into_iter().map(|(_, m)| m).collect()
}

/// SMOTE oversampling: raises each class `c` with `targets[c] = Some(t)` and
/// fewer than `t` rows to exactly `t` rows. Originals are retained; synthetic
/// rows are appended class by class.
pub fn smote(ds: &Dataset, targets: &[Option<usize>], k: usize, rng: &Rng) -> Result<SmoteOutput> {
    if targets.len() != ds.n_classes() {
        return Err(shape_err!("{} targets for {} classes", targets.len(), ds.n_classes()));
    }
    if k == 0 {
        return Err(config_err!("smote_k must be at least 1"));
    }
    let mut features = ds.features.clone();
    let mut labels = ds.labels.clone();
    let mut synthetic = Vec::new();
    for (c, members) in ds.class_indices().into_iter().enumerate() {
        let Some(target) = targets[c] else { continue };
        if target <= members.len() {
            continue;
        }
        if members.len() < 2 {
            return Err(config_err!(
                "class {:?} has {} sample(s); SMOTE needs at least 2",
                ds.class_names[c],
                members.len()
            ));
        }
        let k_eff = if k >= members.len() {
            log::warn!(
                "smote_k {k} >= size {} of class {:?}; using {}",
                members.len(),
                ds.class_names[c],
                members.len() - 1
            );
            members.len() - 1
        } else {
            k
        };
        let mut neighbors: Vec<Option<Vec<usize>>> = vec![None; members.len()];
        let mut crng = rng.derive_indexed("smote", c as u64);
        for _ in members.len()..target {
            let i = crng.index(members.len());
            let nn = neighbors[i].get_or_insert_with(|| nearest_neighbors(&ds.features, &members, i, k_eff));
            let neighbor = nn[crng.index(nn.len())];
            let gap = crng.uniform();
            let parent = members[i];
            let row: Vec<f64> = ds
                .features
                .row(parent)
                .iter()
                .zip(ds.features.row(neighbor))
                .map(|(&p, &n)| p + gap * (n - p))
                .collect();
            features.push_row(&row)?;
            labels.push(c);
            synthetic.push(SyntheticOrigin {
                row: labels.len() - 1,
                parent,
                neighbor,
                gap,
            });
        }
    }
    let dataset = Dataset::new(features, labels, ds.feature_names.clone(), ds.class_names.clone())?;
    Ok(SmoteOutput { dataset, synthetic })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[[f64; 2]], labels: &[usize], classes: usize) -> Dataset {
        Dataset::new(
            Matrix::from_rows(rows).unwrap(),
            labels.to_vec(),
            vec!["x".into(), "y".into()],
            (0..classes).map(|c| format!("c{c}")).collect(),
        )
        .unwrap()
    }

    fn blob(n_major: usize, n_minor: usize, seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n_major {
            rows.push([rng.normal(), rng.normal()]);
            labels.push(0);
        }
        for _ in 0..n_minor {
            rows.push([5.0 + rng.normal(), 5.0 + rng.normal()]);
            labels.push(1);
        }
        ds(&rows, &labels, 2)
    }

    #[test]
    fn identical_points_stay_put() {
        let d = ds(&[[0.0, 0.0], [1.0, 2.0], [1.0, 2.0]], &[0, 1, 1], 2);
        let out = smote(&d, &[None, Some(10)], 5, &Rng::new(0)).unwrap();
        assert_eq!(out.dataset.class_counts(), vec![1, 10]);
        for s in &out.synthetic {
            assert_eq!(out.dataset.features.row(s.row), &[1.0, 2.0]);
        }
    }

    #[test]
    fn reaches_targets_and_keeps_originals() {
        let d = blob(40, 7, 1);
        let out = smote(&d, &[Some(40), Some(40)], 3, &Rng::new(2)).unwrap();
        assert_eq!(out.dataset.class_counts(), vec![40, 40]);
        assert_eq!(out.dataset.features.select_rows(&(0..47).collect::<Vec<_>>()), d.features);
        assert_eq!(out.synthetic.len(), 33);
    }

    #[test]
    fn tiny_classes() {
        let d = ds(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], &[0, 0, 1], 2);
        assert!(smote(&d, &[None, Some(4)], 5, &Rng::new(0)).is_err());
        // k larger than the class is clamped.
        let out = smote(&d, &[Some(5), None], 5, &Rng::new(0)).unwrap();
        assert_eq!(out.dataset.class_counts(), vec![5, 1]);
        assert!(smote(&d, &[Some(5), None], 0, &Rng::new(0)).is_err());
    }

    #[test]
    fn deterministic() {
        let d = blob(30, 6, 3);
        let a = smote(&d, &[None, Some(30)], 5, &Rng::new(9)).unwrap();
        let b = smote(&d, &[None, Some(30)], 5, &Rng::new(9)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.synthetic, b.synthetic);
    }

    /// All-pairs distance oracle: the k-th smallest distance from `parent`
    /// to any other member of its class.
    fn kth_distance(d: &Dataset, parent: usize, k: usize) -> f64 {
        let class = d.labels[parent];
        let mut dist: Vec<f64> = (0..d.n_rows())
            .filter(|&j| j != parent && d.labels[j] == class)
            .map(|j| {
                let (a, b) = (d.features.row(parent), d.features.row(j));
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .collect();
        dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dist[k.min(dist.len()) - 1]
    }

    #[test]
    fn synthetics_lie_on_verified_neighbor_segments() {
        let d = blob(100, 12, 5);
        let k = 4;
        let out = smote(&d, &[None, Some(100)], k, &Rng::new(6)).unwrap();
        for s in &out.synthetic {
            let (p, n) = (d.features.row(s.parent), d.features.row(s.neighbor));
            assert_eq!(d.labels[s.neighbor], d.labels[s.parent]);
            assert_ne!(s.parent, s.neighbor);
            let pn = ((p[0] - n[0]).powi(2) + (p[1] - n[1]).powi(2)).sqrt();
            assert!(pn <= kth_distance(&d, s.parent, k) + 1e-12);
            let x = out.dataset.features.row(s.row);
            assert!((0.0..=1.0).contains(&s.gap));
            for j in 0..2 {
                assert!((x[j] - (p[j] + s.gap * (n[j] - p[j]))).abs() < 1e-12);
                assert!(x[j] >= p[j].min(n[j]) - 1e-12 && x[j] <= p[j].max(n[j]) + 1e-12);
            }
        }
    }
}
