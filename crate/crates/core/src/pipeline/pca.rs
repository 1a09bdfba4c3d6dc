use serde::{Deserialize, Serialize};

use crate::error::{config_err, data_err, shape_err, Result};
use crate::numerics::Matrix;

/// Principal-component basis fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `n_features × n_components`, orthonormal columns.
    pub components: Matrix,
    /// Explained-variance ratio of every eigen-direction, largest first
    /// (length `n_features`, not just the kept ones).
    pub explained_variance_ratio: Vec<f64>,
}

impl Pca {
    /// Keeps the fewest leading components whose cumulative explained-variance
    /// ratio reaches `variance_target`.
    pub fn fit(x: &Matrix, variance_target: f64) -> Result<Self> {
        if !(variance_target > 0.0 && variance_target <= 1.0) {
            return Err(config_err!("PCA variance target {variance_target} outside (0, 1]"));
        }
        if x.rows() < 2 {
            return Err(data_err!("PCA needs at least two rows, got {}", x.rows()));
        }
        let d = x.cols();
        let mean = x.column_means();
        let mut centered = x.clone();
        for r in 0..centered.rows() {
            for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        let cov = centered.t_matmul(&centered)?.scale(1.0 / (x.rows() - 1) as f64);
        let (eigenvalues, eigenvectors) = symmetric_eigen(&cov);

        let total: f64 = eigenvalues.iter().map(|&l| l.max(0.0)).sum();
        let explained_variance_ratio: Vec<f64> = if total > 0.0 {
            eigenvalues.iter().map(|&l| l.max(0.0) / total).collect()
        } else {
            vec![0.0; d]
        };
        let mut kept = d;
        let mut cumulative = 0.0;
        for (i, r) in explained_variance_ratio.iter().enumerate() {
            cumulative += r;
            if cumulative >= variance_target - 1e-12 {
                kept = i + 1;
                break;
            }
        }
        let components = eigenvectors.select_columns(&(0..kept).collect::<Vec<_>>());
        Ok(Self {
            mean,
            components,
            explained_variance_ratio,
        })
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.cols()
    }

    /// `(x - mean) · components`.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_features() {
            return Err(shape_err!("PCA fitted on {} features, got {}", self.n_features(), x.cols()));
        }
        let mut centered = x.clone();
        for r in 0..centered.rows() {
            for (v, m) in centered.row_mut(r).iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        centered.matmul(&self.components)
    }

    /// `projected · componentsᵀ + mean`.
    pub fn inverse_transform(&self, projected: &Matrix) -> Result<Matrix> {
        let mut x = projected.matmul_t(&self.components)?;
        x.add_row_broadcast(&self.mean)?;
        Ok(x)
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors
/// as columns. Each eigenvector's largest-magnitude entry is made positive so
/// the basis is reproducible.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "symmetric_eigen needs a square matrix");
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale: f64 = m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)] * m[(p, q)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = v.select_columns(&order);
    for c in 0..n {
        let col = vectors.column(c);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            for r in 0..n {
                vectors[(r, c)] = -vectors[(r, c)];
            }
        }
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn axis_aligned_variances() {
        // Column variances 9 and 1 (sample variance, n - 1 = 3).
        let x = Matrix::from_rows(&[
            [3.0 * 1.5f64.sqrt(), 0.0],
            [-3.0 * 1.5f64.sqrt(), 0.0],
            [0.0, 1.5f64.sqrt()],
            [0.0, -(1.5f64.sqrt())],
        ])
        .unwrap();
        let pca = Pca::fit(&x, 0.9).unwrap();
        assert_eq!(pca.n_components(), 1);
        assert!((pca.explained_variance_ratio[0] - 0.9).abs() < 1e-12);
        assert!((pca.components[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_basis_reconstructs() {
        let mut rng = Rng::new(4);
        let x = Matrix::from_fn(50, 6, |_, c| rng.normal() * (c + 1) as f64 + c as f64);
        let pca = Pca::fit(&x, 1.0).unwrap();
        assert_eq!(pca.n_components(), 6);
        let back = pca.inverse_transform(&pca.transform(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-8);
    }

    #[test]
    fn components_are_orthonormal_and_decorrelate() {
        let mut rng = Rng::new(5);
        let x = Matrix::from_fn(300, 5, |_, _| rng.normal());
        // Correlate the columns.
        let mix = Matrix::from_fn(5, 5, |r, c| if r <= c { 1.0 + r as f64 } else { 0.3 });
        let x = x.matmul(&mix).unwrap();
        let pca = Pca::fit(&x, 1.0).unwrap();
        let gram = pca.components.t_matmul(&pca.components).unwrap();
        assert!(gram.max_abs_diff(&Matrix::identity(5)) < 1e-8);
        let ratios = &pca.explained_variance_ratio;
        assert!(ratios.windows(2).all(|w| w[0] >= w[1]));
        assert!(ratios.iter().sum::<f64>() <= 1.0 + 1e-9);

        let proj = pca.transform(&x).unwrap();
        let cov = proj.t_matmul(&proj).unwrap().scale(1.0 / 299.0);
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(cov[(i, j)].abs() <= 1e-6 * cov[(i, i)].max(cov[(j, j)]));
                }
            }
        }
    }

    #[test]
    fn ratios_match_svd_oracle() {
        let mut rng = Rng::new(11);
        let x = Matrix::from_fn(200, 10, |_, c| rng.normal() * (1.0 + c as f64 * 0.4) + rng.normal() * 0.5);
        let pca = Pca::fit(&x, 1.0).unwrap();

        let means = x.column_means();
        let centered = nalgebra::DMatrix::from_fn(200, 10, |r, c| x[(r, c)] - means[c]);
        let mut sq: Vec<f64> = centered.svd(false, false).singular_values.iter().map(|s| s * s).collect();
        sq.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = sq.iter().sum();
        for (ours, s) in pca.explained_variance_ratio.iter().zip(&sq) {
            assert!((ours - s / total).abs() < 1e-9, "{ours} vs {}", s / total);
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(Pca::fit(&Matrix::zeros(1, 3), 0.9).is_err());
        assert!(Pca::fit(&Matrix::zeros(5, 3), 0.0).is_err());
        assert!(Pca::fit(&Matrix::zeros(5, 3), 1.1).is_err());
    }
}
