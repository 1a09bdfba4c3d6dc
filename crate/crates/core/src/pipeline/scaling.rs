use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Error, Result};
use crate::numerics::Matrix;

/// Percentile of sorted data with linear interpolation between order
/// statistics (position `q·(n-1)`).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn sorted_column(x: &Matrix, c: usize) -> Vec<f64> {
    let mut col = x.column(c);
    col.sort_by(f64::total_cmp);
    col
}

/// Per-feature empirical-CDF map onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTransformer {
    /// Evenly spaced probabilities `0, 1/(q-1), ..., 1`.
    pub references: Vec<f64>,
    /// `n_features × n_quantiles`; row `f` holds feature `f`'s quantiles.
    pub quantiles: Matrix,
}

impl QuantileTransformer {
    /// Fits on training rows. The table size is `min(n_quantiles, rows)`.
    pub fn fit(x: &Matrix, n_quantiles: usize) -> Result<Self> {
        if n_quantiles < 2 {
            return Err(config_err!("need at least 2 quantiles, got {n_quantiles}"));
        }
        if x.rows() == 0 {
            return Err(Error::Data("cannot fit a quantile transform on zero rows".into()));
        }
        let q = n_quantiles.min(x.rows()).max(2);
        let references: Vec<f64> = (0..q).map(|i| i as f64 / (q - 1) as f64).collect();
        let mut quantiles = Matrix::zeros(x.cols(), q);
        for c in 0..x.cols() {
            let sorted = sorted_column(x, c);
            for (i, &p) in references.iter().enumerate() {
                quantiles[(c, i)] = percentile_sorted(&sorted, p);
            }
        }
        Ok(Self { references, quantiles })
    }

    pub fn n_features(&self) -> usize {
        self.quantiles.rows()
    }

    /// Maps one value of feature `f`.
    ///
    /// Values below/above the fitted range go to 0/1. A value equal to a run
    /// of tied quantiles takes the mean of the run's first and last reference.
    /// A constant feature maps everything to 0.
    pub fn transform_value(&self, f: usize, x: f64) -> f64 {
        let q = self.quantiles.row(f);
        let last = q.len() - 1;
        if q[0] == q[last] {
            return 0.0;
        }
        if x < q[0] {
            return 0.0;
        }
        if x > q[last] {
            return 1.0;
        }
        let lo = q.partition_point(|&v| v < x);
        let hi = q.partition_point(|&v| v <= x);
        let r = &self.references;
        let y = if lo < hi {
            0.5 * (r[lo] + r[hi - 1])
        } else {
            // q[lo - 1] < x < q[lo]
            let (a, b) = (q[lo - 1], q[lo]);
            r[lo - 1] + (x - a) / (b - a) * (r[lo] - r[lo - 1])
        };
        y.clamp(0.0, 1.0)
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_features() {
            return Err(shape_err!(
                "quantile transform fitted on {} features, got {}",
                self.n_features(),
                x.cols()
            ));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = self.transform_value(c, *v);
            }
        }
        Ok(out)
    }
}

/// `(x - median) / IQR` per feature; a zero IQR divides by 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    pub medians: Vec<f64>,
    pub scales: Vec<f64>,
}

impl RobustScaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Data("cannot fit a robust scaler on zero rows".into()));
        }
        let mut medians = Vec::with_capacity(x.cols());
        let mut scales = Vec::with_capacity(x.cols());
        for c in 0..x.cols() {
            let sorted = sorted_column(x, c);
            medians.push(percentile_sorted(&sorted, 0.5));
            let iqr = percentile_sorted(&sorted, 0.75) - percentile_sorted(&sorted, 0.25);
            scales.push(if iqr == 0.0 { 1.0 } else { iqr });
        }
        Ok(Self { medians, scales })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.medians.len() {
            return Err(shape_err!("robust scaler fitted on {} features, got {}", self.medians.len(), x.cols()));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.medians[c]) / self.scales[c];
            }
        }
        Ok(out)
    }
}

/// Per-feature min-max map onto `[0, 1]`, clipped; a constant feature maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Data("cannot fit a min-max scaler on zero rows".into()));
        }
        let mut mins = vec![f64::INFINITY; x.cols()];
        let mut maxs = vec![f64::NEG_INFINITY; x.cols()];
        for row in x.row_iter() {
            for (c, &v) in row.iter().enumerate() {
                mins[c] = mins[c].min(v);
                maxs[c] = maxs[c].max(v);
            }
        }
        Ok(Self { mins, maxs })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mins.len() {
            return Err(shape_err!("min-max scaler fitted on {} features, got {}", self.mins.len(), x.cols()));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                let span = self.maxs[c] - self.mins[c];
                *v = if span > 0.0 {
                    ((*v - self.mins[c]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_fn(values.len(), 1, |r, _| values[r])
    }

    #[test]
    fn own_training_data_becomes_uniform() {
        let mut rng = Rng::new(2);
        // Heavy-tailed input, as flow byte counts are.
        let values: Vec<f64> = (0..10_000).map(|_| (3.0 * rng.normal()).exp()).collect();
        let t = QuantileTransformer::fit(&col(&values), 1000).unwrap();
        let mut out = t.transform(&col(&values)).unwrap().into_vec();
        out.sort_by(f64::total_cmp);
        let n = out.len() as f64;
        let ks = out
            .iter()
            .enumerate()
            .map(|(i, &u)| (u - i as f64 / n).abs().max((u - (i + 1) as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS {ks}");
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let t = QuantileTransformer::fit(&col(&[4.0; 20]), 10).unwrap();
        let out = t.transform(&col(&[4.0, -1.0, 100.0])).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_values_saturate() {
        let t = QuantileTransformer::fit(&col(&[1.0, 2.0, 3.0, 4.0]), 4).unwrap();
        let out = t.transform(&col(&[-10.0, 1.0, 2.5, 4.0, 99.0])).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0, 0.5, 1.0, 1.0]);
        assert!(t.transform(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn ties_take_the_middle_reference() {
        let t = QuantileTransformer::fit(&col(&[0.0, 0.0, 0.0, 1.0, 2.0]), 5).unwrap();
        // quantiles [0, 0, 0, 1, 2] at references [0, .25, .5, .75, 1]
        assert_eq!(t.transform_value(0, 0.0), 0.25);
        assert_eq!(t.transform_value(0, 1.0), 0.75);
        assert_eq!(t.transform_value(0, 0.5), 0.625);
    }

    /// Rank-based percentile, written independently of `percentile_sorted`.
    fn percentile_oracle(values: &[f64], q: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (v.len() - 1) as f64 * q;
        let below = v[h as usize];
        let above = v[(h.ceil() as usize).min(v.len() - 1)];
        below + (h - h.trunc()) * (above - below)
    }

    #[test]
    fn robust_scaler_matches_percentile_oracle() {
        let mut rng = Rng::new(9);
        let values: Vec<f64> = (0..101).map(|_| rng.uniform_in(-5.0, 20.0)).collect();
        let s = RobustScaler::fit(&col(&values)).unwrap();
        let med = percentile_oracle(&values, 0.5);
        let iqr = percentile_oracle(&values, 0.75) - percentile_oracle(&values, 0.25);
        assert!((s.medians[0] - med).abs() < 1e-12);
        assert!((s.scales[0] - iqr).abs() < 1e-12);
    }

    #[test]
    fn robust_scaler_edges() {
        let s = RobustScaler::fit(&col(&[-2.0, -1.0, 0.0, 1.0, 2.0])).unwrap();
        assert_eq!(s.transform(&col(&[0.0])).unwrap()[(0, 0)], 0.0);
        let c = RobustScaler::fit(&col(&[7.0; 5])).unwrap();
        assert_eq!(c.scales[0], 1.0);
        assert!(c.transform(&col(&[7.0, 7.0])).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn min_max_maps_training_range_onto_unit_interval() {
        let s = MinMaxScaler::fit(&col(&[-2.0, 0.0, 6.0])).unwrap();
        let out = s.transform(&col(&[-2.0, 0.0, 6.0, 10.0, -9.0])).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.25, 1.0, 1.0, 0.0]);
        let c = MinMaxScaler::fit(&col(&[3.0, 3.0])).unwrap();
        assert_eq!(c.transform(&col(&[3.0, 4.0])).unwrap().as_slice(), &[0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn quantile_map_is_monotone_and_bounded(
            fit in proptest::collection::vec(-1e3f64..1e3, 2..60),
            probes in proptest::collection::vec(-2e3f64..2e3, 2..30),
        ) {
            let t = QuantileTransformer::fit(&col(&fit), 16).unwrap();
            let mut probes = probes;
            probes.sort_by(f64::total_cmp);
            let out: Vec<f64> = probes.iter().map(|&x| t.transform_value(0, x)).collect();
            prop_assert!(out.iter().all(|&u| (0.0..=1.0).contains(&u)));
            prop_assert!(out.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
