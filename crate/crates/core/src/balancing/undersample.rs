use crate::dataset::Dataset;
use crate::error::{config_err, shape_err, Result};
use crate::numerics::Rng;

/// Keeps a uniform random subset of `targets[c]` rows of each class `c`,
/// without replacement. Classes with `targets[c] == None` are untouched.
/// Surviving rows keep their original relative order.
pub fn random_undersample(ds: &Dataset, targets: &[Option<usize>], rng: &Rng) -> Result<Dataset> {
    if targets.len() != ds.n_classes() {
        return Err(shape_err!("{} targets for {} classes", targets.len(), ds.n_classes()));
    }
    let mut keep = Vec::with_capacity(ds.n_rows());
    for (c, rows) in ds.class_indices().into_iter().enumerate() {
        match targets[c] {
            None => keep.extend(rows),
            Some(t) if t > rows.len() => {
                return Err(config_err!(
                    "undersample target {t} for class {:?} exceeds its {} samples",
                    ds.class_names[c],
                    rows.len()
                ));
            }
            Some(t) => {
                let mut picked = rows;
                rng.derive_indexed("undersample", c as u64).shuffle(&mut picked);
                picked.truncate(t);
                keep.extend(picked);
            }
        }
    }
    keep.sort_unstable();
    Ok(ds.subset(&keep))
}
