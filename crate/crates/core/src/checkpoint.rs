//! On-disk parameter sets: a directory holding `manifest.json` and
//! `tensors.bin` (little-endian f32, row-major, concatenated in manifest order).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::AggregationOp;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::params::{ParamEntry, ParamKind, ParamSet, Role};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "tensors.bin";
const FORMAT: &str = "aggnet-checkpoint";
const VERSION: u32 = 1;
const DTYPE: &str = "f32le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
    pub nbytes: u64,
    pub kind: ParamKind,
    pub aggregable: bool,
}

/// How a composed extractor was produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Composition {
    /// Normalized expression, e.g. `(N1+N2)-N2`.
    pub expression: String,
    pub op: AggregationOp,
    /// Net operand count; the mean's inverse needs it.
    pub count: usize,
    /// Where the non-aggregated entries came from.
    pub donor: String,
    pub skipped: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub run_id: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composition: Option<Composition>,
    pub tensors: Vec<TensorRecord>,
    pub total_bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub params: ParamSet,
}

/// Stable identifier of a training configuration: the first 16 hex digits
/// of the SHA-256 of its JSON form.
pub fn run_id(config: &TrainConfig) -> String {
    let json = serde_json::to_vec(config).expect("configs always serialize");
    let digest = Sha256::digest(&json);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn records(params: &ParamSet) -> (Vec<TensorRecord>, u64) {
    let mut offset = 0u64;
    let tensors = params
        .iter()
        .map(|(name, e)| {
            let nbytes = 4 * e.tensor.len() as u64;
            let r = TensorRecord {
                name: name.to_string(),
                shape: e.tensor.shape().to_vec(),
                dtype: DTYPE.to_string(),
                offset,
                nbytes,
                kind: e.kind,
                aggregable: e.aggregable,
            };
            offset += nbytes;
            r
        })
        .collect();
    (tensors, offset)
}

impl Checkpoint {
    pub fn new(
        params: ParamSet,
        run_id: impl Into<String>,
        config: Option<TrainConfig>,
        model: Option<ModelSpec>,
        composition: Option<Composition>,
    ) -> Self {
        let (tensors, total_bytes) = records(&params);
        let manifest = Manifest {
            format: FORMAT.to_string(),
            version: VERSION,
            run_id: run_id.into(),
            role: params.role().clone(),
            config,
            model,
            composition,
            tensors,
            total_bytes,
        };
        Checkpoint { manifest, params }
    }

    pub fn blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.manifest.total_bytes as usize);
        for (_, e) in self.params.iter() {
            for v in e.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn manifest_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.manifest)?;
        s.push('\n');
        Ok(s)
    }

    /// Write into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(BLOB_FILE), self.blob())?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest_json()?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path)?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", manifest_path.display())))?;
        let blob = fs::read(dir.join(BLOB_FILE))?;
        Self::from_parts(manifest, &blob)
    }

    pub fn from_parts(manifest: Manifest, blob: &[u8]) -> Result<Self> {
        if manifest.format != FORMAT || manifest.version != VERSION {
            return Err(Error::format(format!(
                "not a version-{VERSION} checkpoint: format {:?} version {}",
                manifest.format, manifest.version
            )));
        }
        if manifest.total_bytes != blob.len() as u64 {
            return Err(Error::format(format!(
                "manifest promises {} bytes, blob has {}",
                manifest.total_bytes,
                blob.len()
            )));
        }
        let mut params = ParamSet::new(manifest.role.clone());
        let mut expected_offset = 0u64;
        for r in &manifest.tensors {
            if r.dtype != DTYPE {
                return Err(Error::format(format!("{}: unsupported dtype {:?}", r.name, r.dtype)));
            }
            let elems = r
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .ok_or_else(|| Error::format(format!("{}: shape {:?} overflows", r.name, r.shape)))?;
            if r.offset != expected_offset || Some(r.nbytes) != elems.checked_mul(4) {
                return Err(Error::format(format!(
                    "{}: offset {} / {} bytes inconsistent with shape {:?} at offset {expected_offset}",
                    r.name, r.offset, r.nbytes, r.shape
                )));
            }
            if params.get(&r.name).is_some() {
                return Err(Error::format(format!("duplicate tensor {:?}", r.name)));
            }
            let end = expected_offset + r.nbytes;
            let bytes = blob
                .get(expected_offset as usize..end as usize)
                .ok_or_else(|| Error::format(format!("{}: payload runs past the blob", r.name)))?;
            let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            let tensor = Tensor::new(r.shape.clone(), data)?;
            params.insert(r.name.clone(), ParamEntry { tensor, kind: r.kind, aggregable: r.aggregable });
            expected_offset = end;
        }
        if expected_offset != manifest.total_bytes {
            return Err(Error::format(format!(
                "tensors cover {expected_offset} bytes, manifest total is {}",
                manifest.total_bytes
            )));
        }
        Ok(Checkpoint { manifest, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_bundle, read_head};

    fn sample() -> Checkpoint {
        let spec = ModelSpec::vgg_lite();
        let b = build_bundle(&spec, 2, 3).unwrap();
        let cfg = TrainConfig::joint(1, 3);
        Checkpoint::new(b.extractors[1].clone(), run_id(&cfg), Some(cfg), Some(spec), None)
    }

    #[test]
    fn save_load_save_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ck = sample();
        ck.save(&dir.path().join("a")).unwrap();
        let back = Checkpoint::load(&dir.path().join("a")).unwrap();
        assert_eq!(back, ck);
        back.save(&dir.path().join("b")).unwrap();
        for f in [MANIFEST_FILE, BLOB_FILE] {
            let x = fs::read(dir.path().join("a").join(f)).unwrap();
            let y = fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
    }

    #[test]
    fn manifest_accounts_for_every_byte() {
        let ck = sample();
        let blob = ck.blob();
        assert_eq!(ck.manifest.total_bytes, blob.len() as u64);
        assert_eq!(ck.manifest.tensors.len(), ck.params.len());
        let last = ck.manifest.tensors.last().unwrap();
        assert_eq!(last.offset + last.nbytes, blob.len() as u64);
    }

    #[test]
    fn head_round_trips_without_model_or_config() {
        let b = build_bundle(&ModelSpec::vgg_lite(), 1, 0).unwrap();
        let ck = Checkpoint::new(read_head(&b.head).clone(), "x", None, None, None);
        let back = Checkpoint::from_parts(ck.manifest.clone(), &ck.blob()).unwrap();
        assert_eq!(back.params, ck.params);
        assert_eq!(back.params.role(), &Role::TaskHead);
    }

    #[test]
    fn truncated_blob_is_a_format_error() {
        let ck = sample();
        let blob = ck.blob();
        let err = Checkpoint::from_parts(ck.manifest.clone(), &blob[..blob.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn inconsistent_record_is_a_format_error() {
        let ck = sample();
        let mut m = ck.manifest.clone();
        m.tensors[0].shape[0] += 1;
        assert!(matches!(Checkpoint::from_parts(m, &ck.blob()), Err(Error::Format(_))));
    }

    #[test]
    fn run_id_is_stable_and_config_sensitive() {
        let a = TrainConfig::joint(3, 1);
        assert_eq!(run_id(&a), run_id(&a.clone()));
        assert_eq!(run_id(&a).len(), 16);
        assert_ne!(run_id(&a), run_id(&TrainConfig::joint(3, 2)));
    }
}
