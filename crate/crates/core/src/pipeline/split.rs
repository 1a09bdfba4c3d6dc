use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{config_err, data_err, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Each class is shuffled before being cut.
    #[default]
    Shuffled,
    /// Each class is cut in row (time) order.
    Contiguous,
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Per-class sizes for a three-way cut of `n` rows.
///
/// Boundaries are rounded cumulative fractions; a split left empty borrows
/// one row from the largest split.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let b1 = (n as f64 * fractions[0]).round() as usize;
    let b2 = ((n as f64 * (fractions[0] + fractions[1])).round() as usize).clamp(b1, n);
    let mut sizes = [b1.min(n), b2 - b1.min(n), n - b2];
    if n >= 3 {
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let largest = (0..3).max_by_key(|&i| (sizes[i], std::cmp::Reverse(i))).expect("three splits");
            sizes[largest] -= 1;
            sizes[empty] += 1;
        }
    }
    sizes
}

/// Stratified train/validation/test partition.
pub fn stratified_split(ds: &Dataset, fractions: [f64; 3], mode: SplitMode, rng: &Rng) -> Result<Splits> {
    let [train, val, test] = stratified_split_indices(ds, fractions, mode, rng)?;
    Ok(Splits {
        train: ds.subset(&train),
        val: ds.subset(&val),
        test: ds.subset(&test),
    })
}

/// Row indices of each split, ascending. Depends only on the labels.
pub fn stratified_split_indices(
    ds: &Dataset,
    fractions: [f64; 3],
    mode: SplitMode,
    rng: &Rng,
) -> Result<[Vec<usize>; 3]> {
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(config_err!("split fractions {fractions:?} must be positive and sum to 1"));
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (class, mut rows) in ds.class_indices().into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 3 {
            return Err(data_err!(
                "class {:?} has {} samples; stratified splitting needs at least 3",
                ds.class_names[class],
                rows.len()
            ));
        }
        if mode == SplitMode::Shuffled {
            rng.derive_indexed("split", class as u64).shuffle(&mut rows);
        }
        let sizes = split_sizes(rows.len(), fractions);
        let mut start = 0;
        for (part, size) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&rows[start..start + size]);
            start += size;
        }
    }
    for part in &mut parts {
        part.sort_unstable();
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    fn labelled(counts: &[usize]) -> Dataset {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let n = labels.len();
        Dataset::new(
            Matrix::from_fn(n, 1, |r, _| r as f64),
            labels,
            vec!["row".into()],
            (0..counts.len()).map(|c| format!("c{c}")).collect(),
        )
        .unwrap()
    }

    const F: [f64; 3] = [0.6, 0.2, 0.2];

    #[test]
    fn single_class_sixty_twenty_twenty() {
        let s = stratified_split(&labelled(&[100]), F, SplitMode::Shuffled, &Rng::new(0)).unwrap();
        assert_eq!((s.train.n_rows(), s.val.n_rows(), s.test.n_rows()), (60, 20, 20));
    }

    #[test]
    fn imbalanced_pair() {
        let s = stratified_split(&labelled(&[900, 100]), F, SplitMode::Shuffled, &Rng::new(1)).unwrap();
        let counts = s.test.class_counts();
        assert!((counts[0] as i64 - 180).abs() <= 1);
        assert!((counts[1] as i64 - 20).abs() <= 1);
    }

    #[test]
    fn same_seed_same_split() {
        let ds = labelled(&[50, 30, 9]);
        let a = stratified_split(&ds, F, SplitMode::Shuffled, &Rng::new(5)).unwrap();
        let b = stratified_split(&ds, F, SplitMode::Shuffled, &Rng::new(5)).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn contiguous_mode_keeps_time_order() {
        let s = stratified_split(&labelled(&[10]), F, SplitMode::Contiguous, &Rng::new(0)).unwrap();
        assert_eq!(s.train.features.column(0), (0..6).map(|x| x as f64).collect::<Vec<_>>());
        assert_eq!(s.test.features.column(0), vec![8.0, 9.0]);
    }

    #[test]
    fn tiny_classes() {
        assert_eq!(split_sizes(3, F), [1, 1, 1]);
        let err = stratified_split(&labelled(&[10, 2]), F, SplitMode::Shuffled, &Rng::new(0));
        assert!(matches!(err, Err(crate::error::Error::Data(_))));
        assert!(stratified_split(&labelled(&[10]), [0.5, 0.3, 0.3], SplitMode::Shuffled, &Rng::new(0)).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_exact_and_proportional(counts in proptest::collection::vec(3usize..300, 1..5), seed in any::<u64>()) {
            let ds = labelled(&counts);
            let s = stratified_split(&ds, F, SplitMode::Shuffled, &Rng::new(seed)).unwrap();
            let mut all: Vec<u64> = [&s.train, &s.val, &s.test]
                .iter()
                .flat_map(|d| d.features.column(0))
                .map(|x| x as u64)
                .collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..ds.n_rows() as u64).collect::<Vec<_>>());
            for (c, &n) in counts.iter().enumerate() {
                for (part, f) in [&s.train, &s.val, &s.test].iter().zip(F) {
                    let got = part.class_counts()[c] as f64;
                    prop_assert!((got / n as f64 - f).abs() <= 1.0 / n as f64 + 1e-12);
                }
            }
        }
    }
}
