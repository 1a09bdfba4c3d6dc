use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{data_err, Error, Result};
use crate::numerics::Matrix;

use super::pca::Pca;
use super::scaling::{MinMaxScaler, QuantileTransformer, RobustScaler};

pub const ARTIFACT_MAGIC: &str = "DBN-IDS-PIPELINE";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum FittedScaler {
    None,
    Quantile(QuantileTransformer),
    Robust(RobustScaler),
}

impl FittedScaler {
    fn kind(&self) -> &'static str {
        match self {
            FittedScaler::None => "none",
            FittedScaler::Quantile(_) => "quantile",
            FittedScaler::Robust(_) => "robust",
        }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            FittedScaler::None => Ok(x.clone()),
            FittedScaler::Quantile(q) => q.transform(x),
            FittedScaler::Robust(r) => r.transform(x),
        }
    }
}

/// Fitted preprocessing state: which raw columns survive, the scaler and the
/// PCA basis. Applying it is a pure function of the artifact and the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineArtifact {
    /// Raw feature names kept after variance and correlation filtering.
    pub kept_columns: Vec<String>,
    pub removed_zero_variance: Vec<String>,
    pub removed_correlated: Vec<String>,
    pub class_names: Vec<String>,
    pub scaler: FittedScaler,
    pub pca: Option<Pca>,
    /// Final rescale onto `[0, 1]`, fitted on the transformed training rows.
    pub unit_range: Option<MinMaxScaler>,
    /// Number of training rows the scaler and PCA were fitted on.
    pub fitted_rows: usize,
}

/// Text header of the persisted artifact. Numeric tensors follow as raw
/// little-endian `f64` in the order listed by `tensors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kept_columns: Vec<String>,
    removed_zero_variance: Vec<String>,
    removed_correlated: Vec<String>,
    class_names: Vec<String>,
    scaler: String,
    pca_components: Option<usize>,
    unit_range: bool,
    fitted_rows: usize,
    tensors: Vec<(String, usize, usize)>,
    payload_values: usize,
    sha256: String,
}

impl PipelineArtifact {
    pub fn n_inputs(&self) -> usize {
        self.kept_columns.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.pca.as_ref().map_or(self.kept_columns.len(), Pca::n_components)
    }

    pub fn output_names(&self) -> Vec<String> {
        match &self.pca {
            Some(p) => (1..=p.n_components()).map(|i| format!("pc{i}")).collect(),
            None => self.kept_columns.clone(),
        }
    }

    /// PCA and the final unit-range step on already-scaled rows.
    fn project(&self, scaled: Matrix) -> Result<Matrix> {
        let projected = match &self.pca {
            Some(p) => p.transform(&scaled)?,
            None => scaled,
        };
        match &self.unit_range {
            Some(u) => u.transform(&projected),
            None => Ok(projected),
        }
    }

    /// Applies the fitted pipeline to rows in the raw (post-ingest) schema.
    /// Columns are located by name, so extra columns are ignored.
    pub fn transform(&self, raw: &Dataset) -> Result<Dataset> {
        let mut idx = Vec::with_capacity(self.kept_columns.len());
        for name in &self.kept_columns {
            idx.push(
                raw.feature_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| data_err!("input is missing pipeline column {name:?}"))?,
            );
        }
        let filtered = raw.select_features(&idx);
        self.transform_filtered(&filtered)
    }

    /// Applies scaler and PCA to rows that already hold exactly `kept_columns`.
    pub fn transform_filtered(&self, filtered: &Dataset) -> Result<Dataset> {
        if filtered.feature_names != self.kept_columns {
            return Err(data_err!("feature columns do not match the fitted pipeline"));
        }
        let out = self.project(self.scaler.transform(&filtered.features)?)?;
        filtered.with_features(out, self.output_names())
    }

    /// All numeric state as `(name, rows, cols, values)`, in payload order.
    fn payload(&self) -> Vec<(String, usize, usize, Vec<f64>)> {
        let mut out = Vec::new();
        match &self.scaler {
            FittedScaler::None => {}
            FittedScaler::Quantile(q) => {
                out.push(("references".into(), 1, q.references.len(), q.references.clone()));
                let m = &q.quantiles;
                out.push(("quantiles".into(), m.rows(), m.cols(), m.as_slice().to_vec()));
            }
            FittedScaler::Robust(r) => {
                out.push(("medians".into(), 1, r.medians.len(), r.medians.clone()));
                out.push(("scales".into(), 1, r.scales.len(), r.scales.clone()));
            }
        }
        if let Some(p) = &self.pca {
            let m = &p.components;
            out.push(("pca_components".into(), m.rows(), m.cols(), m.as_slice().to_vec()));
            out.push(("pca_mean".into(), 1, p.mean.len(), p.mean.clone()));
            let r = &p.explained_variance_ratio;
            out.push(("pca_explained_variance_ratio".into(), 1, r.len(), r.clone()));
        }
        if let Some(u) = &self.unit_range {
            out.push(("unit_min".into(), 1, u.mins.len(), u.mins.clone()));
            out.push(("unit_max".into(), 1, u.maxs.len(), u.maxs.clone()));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut bytes = Vec::new();
        for (_, _, _, values) in &payload {
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            kept_columns: self.kept_columns.clone(),
            removed_zero_variance: self.removed_zero_variance.clone(),
            removed_correlated: self.removed_correlated.clone(),
            class_names: self.class_names.clone(),
            scaler: self.scaler.kind().to_string(),
            pca_components: self.pca.as_ref().map(Pca::n_components),
            unit_range: self.unit_range.is_some(),
            fitted_rows: self.fitted_rows,
            tensors: payload.iter().map(|(n, r, c, _)| (n.clone(), *r, *c)).collect(),
            payload_values: bytes.len() / 8,
            sha256: hex(&Sha256::digest(&bytes)),
        };
        let mut out = format!("{ARTIFACT_MAGIC} {ARTIFACT_VERSION}\n").into_bytes();
        out.extend_from_slice(serde_json::to_string_pretty(&header).expect("header serialises").as_bytes());
        out.extend_from_slice(b"\n--\n");
        out.extend_from_slice(&bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = bytes;
        let mut first = String::new();
        reader.read_line(&mut first).map_err(|e| Error::Format(e.to_string()))?;
        let mut parts = first.trim_end().split(' ');
        if parts.next() != Some(ARTIFACT_MAGIC) {
            return Err(Error::Format("not a pipeline artifact".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("missing artifact version".into()))?;
        if version != ARTIFACT_VERSION {
            return Err(Error::Format(format!(
                "pipeline artifact version {version}, expected {ARTIFACT_VERSION}"
            )));
        }
        let sep = b"\n--\n";
        let split = reader
            .windows(sep.len())
            .position(|w| w == sep)
            .ok_or_else(|| Error::Format("artifact header is not terminated".into()))?;
        let header: Header =
            serde_json::from_slice(&reader[..split]).map_err(|e| Error::Format(format!("artifact header: {e}")))?;
        let payload = &reader[split + sep.len()..];
        if payload.len() != header.payload_values * 8 {
            return Err(Error::Format(format!(
                "artifact payload holds {} bytes, header declares {} values",
                payload.len(),
                header.payload_values
            )));
        }
        if hex(&Sha256::digest(payload)) != header.sha256 {
            return Err(Error::Format("artifact payload checksum mismatch".into()));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();

        let mut tensors = std::collections::BTreeMap::new();
        let mut offset = 0;
        for (name, rows, cols) in &header.tensors {
            let len = rows * cols;
            if offset + len > values.len() {
                return Err(Error::Format(format!("tensor {name} overruns the payload")));
            }
            let m = Matrix::from_vec(*rows, *cols, values[offset..offset + len].to_vec())
                .map_err(|e| Error::Format(e.to_string()))?;
            tensors.insert(name.clone(), m);
            offset += len;
        }
        let mut take = |name: &str| -> Result<Matrix> {
            tensors
                .remove(name)
                .ok_or_else(|| Error::Format(format!("artifact is missing tensor {name}")))
        };
        let scaler = match header.scaler.as_str() {
            "none" => FittedScaler::None,
            "quantile" => FittedScaler::Quantile(QuantileTransformer {
                references: take("references")?.into_vec(),
                quantiles: take("quantiles")?,
            }),
            "robust" => FittedScaler::Robust(RobustScaler {
                medians: take("medians")?.into_vec(),
                scales: take("scales")?.into_vec(),
            }),
            other => return Err(Error::Format(format!("unknown scaler kind {other:?}"))),
        };
        let pca = match header.pca_components {
            None => None,
            Some(_) => Some(Pca {
                components: take("pca_components")?,
                mean: take("pca_mean")?.into_vec(),
                explained_variance_ratio: take("pca_explained_variance_ratio")?.into_vec(),
            }),
        };
        let unit_range = if header.unit_range {
            Some(MinMaxScaler {
                mins: take("unit_min")?.into_vec(),
                maxs: take("unit_max")?.into_vec(),
            })
        } else {
            None
        };
        Ok(Self {
            kept_columns: header.kept_columns,
            removed_zero_variance: header.removed_zero_variance,
            removed_correlated: header.removed_correlated,
            class_names: header.class_names,
            scaler,
            pca,
            unit_range,
            fitted_rows: header.fitted_rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn sample(scaler: &str, with_pca: bool) -> PipelineArtifact {
        let mut rng = Rng::new(8);
        let x = Matrix::from_fn(40, 3, |_, c| rng.normal() * (c + 1) as f64);
        let scaler = match scaler {
            "quantile" => FittedScaler::Quantile(QuantileTransformer::fit(&x, 16).unwrap()),
            "robust" => FittedScaler::Robust(RobustScaler::fit(&x).unwrap()),
            _ => FittedScaler::None,
        };
        let scaled = scaler.transform(&x).unwrap();
        let pca = with_pca.then(|| Pca::fit(&scaled, 0.8).unwrap());
        let projected = match &pca {
            Some(p) => p.transform(&scaled).unwrap(),
            None => scaled,
        };
        PipelineArtifact {
            kept_columns: vec!["a".into(), "b".into(), "c".into()],
            removed_zero_variance: vec!["z".into()],
            removed_correlated: vec![],
            class_names: vec!["x".into(), "y".into()],
            scaler,
            pca,
            unit_range: Some(MinMaxScaler::fit(&projected).unwrap()),
            fitted_rows: 40,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for (scaler, pca) in [("quantile", true), ("robust", false), ("none", true), ("none", false)] {
            let a = sample(scaler, pca);
            let bytes = a.to_bytes();
            let b = PipelineArtifact::from_bytes(&bytes).unwrap();
            assert_eq!(a, b);
            assert_eq!(bytes, b.to_bytes());
        }
    }

    #[test]
    fn header_is_readable() {
        let bytes = sample("quantile", true).to_bytes();
        let text = String::from_utf8_lossy(&bytes[..200]);
        assert!(text.starts_with("DBN-IDS-PIPELINE 1\n"));
        assert!(text.contains("\"kept_columns\""));
    }

    #[test]
    fn corruption_and_version_are_detected() {
        let mut bytes = sample("quantile", true).to_bytes();
        let last = bytes.len() - 3;
        bytes[last] ^= 0x40;
        assert!(matches!(PipelineArtifact::from_bytes(&bytes), Err(Error::Format(_))));

        let mut bytes = sample("none", false).to_bytes();
        let version_at = ARTIFACT_MAGIC.len() + 1;
        assert_eq!(bytes[version_at], b'1');
        bytes[version_at] = b'9';
        assert!(matches!(PipelineArtifact::from_bytes(&bytes), Err(Error::Format(_))));
        assert!(PipelineArtifact::from_bytes(b"garbage").is_err());
    }

    #[test]
    fn transform_selects_columns_by_name() {
        let a = sample("robust", false);
        let raw = Dataset::new(
            Matrix::from_rows(&[[9.0, 1.0, 2.0, 3.0]]).unwrap(),
            vec![1],
            vec!["extra".into(), "a".into(), "b".into(), "c".into()],
            vec!["x".into(), "y".into()],
        )
        .unwrap();
        let out = a.transform(&raw).unwrap();
        assert_eq!(out.feature_names, vec!["a", "b", "c"]);
        let scaled = a.scaler.transform(&Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap()).unwrap();
        let direct = a.unit_range.as_ref().unwrap().transform(&scaled).unwrap();
        assert_eq!(out.features, direct);

        let missing = raw.select_features(&[0, 1]);
        assert!(a.transform(&missing).is_err());
    }
}
