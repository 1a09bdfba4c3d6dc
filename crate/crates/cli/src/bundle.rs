//! Trained-model bundle: one file holding the classifier, the pipeline it
//! was trained behind, a config echo and a metrics snapshot.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DBNIDSMB" | u32 version | u64 len | JSON header
//!            | u64 len | pipeline artifact bytes
//!            | u64 count | count × f32 parameters
//!            | SHA-256 of everything above
//! ```

use std::path::Path;

use dbn_ids::model::{Classifier, ModelRegistry, NamedTensor};
use dbn_ids::pipeline::PipelineArtifact;
use dbn_ids::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const BUNDLE_MAGIC: &[u8; 8] = b"DBNIDSMB";
pub const BUNDLE_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    /// Index of the first value in the parameter payload.
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: String,
    architecture: serde_json::Value,
    class_names: Vec<String>,
    training: serde_json::Value,
    metrics: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: String,
    pub architecture: serde_json::Value,
    pub class_names: Vec<String>,
    /// Settings the model was trained with.
    pub training: serde_json::Value,
    pub metrics: serde_json::Value,
    pub pipeline: PipelineArtifact,
    pub tensors: Vec<NamedTensor>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_err("bundle is truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| format_err("length field overflows"))
    }
}

impl ModelBundle {
    /// Packages a classifier whose parameters are already `f32`-exact.
    pub fn new(
        model: &dyn Classifier,
        pipeline: PipelineArtifact,
        training: serde_json::Value,
        metrics: serde_json::Value,
    ) -> Result<Self> {
        let tensors = model.tensors();
        if tensors.iter().flat_map(|t| &t.values).any(|&v| v as f32 as f64 != v) {
            return Err(Error::State("model parameters must be narrowed to f32 before bundling".into()));
        }
        if pipeline.n_outputs() != model.n_inputs() {
            return Err(Error::Shape(format!(
                "pipeline yields {} features, model expects {}",
                pipeline.n_outputs(),
                model.n_inputs()
            )));
        }
        Ok(Self {
            kind: model.kind().to_string(),
            architecture: model.architecture(),
            class_names: pipeline.class_names.clone(),
            training,
            metrics,
            pipeline,
            tensors,
        })
    }

    /// Rebuilds the classifier through the model registry.
    pub fn classifier(&self) -> Result<Box<dyn Classifier>> {
        ModelRegistry::builtin().get(&self.kind)?.restore(&self.architecture, &self.tensors)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for t in &self.tensors {
            entries.push(TensorEntry {
                name: t.name.clone(),
                rows: t.rows,
                cols: t.cols,
                offset,
            });
            offset += t.values.len();
        }
        let header = Header {
            kind: self.kind.clone(),
            architecture: self.architecture.clone(),
            class_names: self.class_names.clone(),
            training: self.training.clone(),
            metrics: self.metrics.clone(),
            tensors: entries,
        };
        let header = serde_json::to_vec_pretty(&header).map_err(|e| format_err(e.to_string()))?;
        let artifact = self.pipeline.to_bytes();

        let mut out = Vec::with_capacity(64 + header.len() + artifact.len() + 4 * offset);
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(artifact.len() as u64).to_le_bytes());
        out.extend_from_slice(&artifact);
        out.extend_from_slice(&(offset as u64).to_le_bytes());
        for t in &self.tensors {
            for &v in &t.values {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    /// Parses a bundle, verifying the checksum before anything else.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < BUNDLE_MAGIC.len() + 4 + DIGEST_LEN || &bytes[..BUNDLE_MAGIC.len()] != BUNDLE_MAGIC {
            return Err(format_err("not a model bundle"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != BUNDLE_VERSION {
            return Err(format_err(format!(
                "bundle version {version} is not supported (expected {BUNDLE_VERSION})"
            )));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(format_err("bundle checksum mismatch"));
        }

        let mut r = Reader { bytes: body, pos: 12 };
        let n = r.u64()?;
        let header: Header = serde_json::from_slice(r.take(n)?).map_err(|e| format_err(format!("bad header: {e}")))?;
        let n = r.u64()?;
        let pipeline = PipelineArtifact::from_bytes(r.take(n)?)?;
        let count = r.u64()?;
        let raw = r.take(count.checked_mul(4).ok_or_else(|| format_err("length field overflows"))?)?;
        if r.pos != body.len() {
            return Err(format_err("trailing bytes after parameter payload"));
        }
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();

        let mut tensors = Vec::with_capacity(header.tensors.len());
        let mut expected = 0;
        for e in &header.tensors {
            let len = e.rows * e.cols;
            if e.offset != expected || e.offset + len > values.len() {
                return Err(format_err(format!("tensor {} lies outside the payload", e.name)));
            }
            tensors.push(NamedTensor {
                name: e.name.clone(),
                rows: e.rows,
                cols: e.cols,
                values: values[e.offset..e.offset + len].to_vec(),
            });
            expected += len;
        }
        if expected != values.len() {
            return Err(format_err("payload holds values no tensor claims"));
        }
        if header.class_names != pipeline.class_names {
            return Err(format_err("bundle and pipeline disagree on class names"));
        }
        Ok(Self {
            kind: header.kind,
            architecture: header.architecture,
            class_names: header.class_names,
            training: header.training,
            metrics: header.metrics,
            pipeline,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dbn_ids::model::ModelSettings;
    use dbn_ids::numerics::Rng;
    use dbn_ids::pipeline::{preprocess, PipelineConfig};
    use dbn_ids::synthetic::{gaussian_blobs, BlobSpec};

    fn fixture(kind: &str) -> (ModelBundle, dbn_ids::Dataset) {
        let spec = BlobSpec {
            counts: vec![40, 30, 30],
            dims: 5,
            ..Default::default()
        };
        let ds = gaussian_blobs(&spec, &Rng::new(1)).unwrap();
        let pre = preprocess(&ds, &PipelineConfig::default(), &Rng::new(2)).unwrap();
        let mut settings = ModelSettings {
            kind: kind.into(),
            hidden_layers: vec![4, 3],
            ..Default::default()
        };
        settings.pretrain.epochs = 1;
        settings.finetune.epochs = 2;
        settings.mlp.hidden_layers = vec![4];
        settings.mlp.epochs = 2;
        let req = dbn_ids::model::TrainRequest {
            train: &pre.splits.train,
            val: None,
            sample_weights: None,
            weighting: Default::default(),
            settings: &settings,
            rng: &Rng::new(3),
        };
        let mut trained = ModelRegistry::builtin().get(kind).unwrap().train(&req).unwrap();
        trained.model.narrow_to_f32();
        let bundle = ModelBundle::new(
            trained.model.as_ref(),
            pre.artifact,
            serde_json::to_value(&settings).unwrap(),
            serde_json::json!({"note": "test", "score": 0.1 + 0.2}),
        )
        .unwrap();
        (bundle, pre.splits.test)
    }

    #[test]
    fn round_trip_is_bit_identical_and_predicts_equally() {
        for kind in ["dbn", "mlp"] {
            let (bundle, test) = fixture(kind);
            let bytes = bundle.to_bytes().unwrap();
            let back = ModelBundle::from_bytes(&bytes).unwrap();
            assert_eq!(back, bundle);
            assert_eq!(back.to_bytes().unwrap(), bytes);
            let a = bundle.classifier().unwrap().predict_proba(&test.features).unwrap();
            let b = back.classifier().unwrap().predict_proba(&test.features).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn every_single_byte_corruption_is_detected() {
        let (bundle, _) = fixture("mlp");
        let bytes = bundle.to_bytes().unwrap();
        for i in (0..bytes.len()).step_by(7) {
            let mut bad = bytes.clone();
            bad[i] ^= 0x20;
            assert!(matches!(ModelBundle::from_bytes(&bad), Err(Error::Format(_))), "byte {i}");
        }
        assert!(ModelBundle::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn version_mismatch_is_a_format_error() {
        let (bundle, _) = fixture("mlp");
        let mut bytes = bundle.to_bytes().unwrap();
        bytes[8] = 9;
        let err = ModelBundle::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version 9"), "{err}");
    }

    #[test]
    fn unnarrowed_parameters_are_refused() {
        let (bundle, _) = fixture("mlp");
        let mut model = bundle.classifier().unwrap();
        let mut tensors = model.tensors();
        tensors[0].values[0] = 0.1;
        model = ModelRegistry::builtin().get("mlp").unwrap().restore(&model.architecture(), &tensors).unwrap();
        let err = ModelBundle::new(model.as_ref(), bundle.pipeline.clone(), serde_json::Value::Null, serde_json::Value::Null);
        assert!(matches!(err, Err(Error::State(_))));
    }
}
