//! Binary container shared by dataset files and model checkpoints.
//!
//! Layout: magic `GOLA`, `u32` version, `u64` metadata length, the JSON
//! metadata, then the arrays listed in the metadata, back to back in
//! little-endian order. Datasets store `f32`; checkpoints declare `f64` so
//! trained parameters reload exactly.

use std::fs;
use std::path::Path;

use gola_core::data::{Dataset, DatasetMeta, FieldPair, PdeKind};
use gola_core::model::{Model, ModelConfig, ModelKind};
use gola_core::train::Normalizer;
use gola_core::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 4] = *b"GOLA";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 4 + 4 + 8;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("version mismatch: file {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated payload: {0}")]
    Truncated(String),
    #[error("bad metadata: {0}")]
    Metadata(String),
}

impl PersistError {
    /// Stable numeric code for each failure kind.
    pub fn code(&self) -> u8 {
        match self {
            PersistError::Io(_) => 1,
            PersistError::BadMagic(_) => 2,
            PersistError::VersionMismatch { .. } => 3,
            PersistError::Truncated(_) => 4,
            PersistError::Metadata(_) => 5,
        }
    }
}

type Result<T> = std::result::Result<T, PersistError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayDecl {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ArrayDecl {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// The JSON block: what the file holds and how the payload is laid out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub content: String,
    pub dtype: Dtype,
    pub arrays: Vec<ArrayDecl>,
    pub meta: serde_json::Value,
}

/// Serializes a header and its arrays (values in declared order).
pub fn encode(header: &Header, arrays: &[&[f64]]) -> Result<Vec<u8>> {
    if header.arrays.len() != arrays.len() {
        return Err(PersistError::Metadata("array count differs from declaration".into()));
    }
    let json = serde_json::to_vec(header).map_err(|e| PersistError::Metadata(e.to_string()))?;
    let payload: usize = header.arrays.iter().map(|a| a.numel() * header.dtype.size()).sum();
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + payload);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (decl, values) in header.arrays.iter().zip(arrays) {
        if decl.numel() != values.len() {
            return Err(PersistError::Metadata(format!("array {} length mismatch", decl.name)));
        }
        match header.dtype {
            Dtype::F32 => values.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            Dtype::F64 => values.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }
    Ok(out)
}

/// Parses a container, returning the header and one `f64` vector per array.
pub fn decode(bytes: &[u8]) -> Result<(Header, Vec<Vec<f64>>)> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        let mut m = [0u8; 4];
        let k = bytes.len().min(4);
        m[..k].copy_from_slice(&bytes[..k]);
        return Err(PersistError::BadMagic(m));
    }
    if bytes.len() < PREAMBLE {
        return Err(PersistError::Truncated("file ends inside the preamble".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(PersistError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[PREAMBLE..];
    if body.len() < json_len {
        return Err(PersistError::Truncated("file ends inside the metadata".into()));
    }
    let header: Header =
        serde_json::from_slice(&body[..json_len]).map_err(|e| PersistError::Metadata(e.to_string()))?;
    let payload = &body[json_len..];
    let size = header.dtype.size();
    let expected: usize = header.arrays.iter().map(|a| a.numel() * size).sum();
    if payload.len() != expected {
        return Err(PersistError::Truncated(format!(
            "declared arrays need {expected} bytes, payload holds {}",
            payload.len()
        )));
    }
    let mut arrays = Vec::with_capacity(header.arrays.len());
    let mut chunks = payload.chunks_exact(size);
    for decl in &header.arrays {
        let values = chunks
            .by_ref()
            .take(decl.numel())
            .map(|c| match header.dtype {
                Dtype::F32 => f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64,
                Dtype::F64 => f64::from_le_bytes(c.try_into().expect("8 bytes")),
            })
            .collect();
        arrays.push(values);
    }
    Ok((header, arrays))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetInfo {
    pde_tag: PdeKind,
    grid_res: usize,
    count: usize,
    seed: u64,
    pair_seeds: Vec<u64>,
    spec: std::collections::BTreeMap<String, f64>,
    target_std: f64,
}

pub const DATASET_CONTENT: &str = "dataset";
pub const CHECKPOINT_CONTENT: &str = "checkpoint";

/// Dataset bytes. Values are stored as `f32`; a dataset produced by the
/// generators is already at that precision and reloads bit-identically.
pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    ds.validate().map_err(|e| PersistError::Metadata(e.to_string()))?;
    let (g, count) = (ds.grid_res, ds.len());
    let info = DatasetInfo {
        pde_tag: ds.pde,
        grid_res: g,
        count,
        seed: ds.meta.seed,
        pair_seeds: ds.meta.pair_seeds.clone(),
        spec: ds.meta.generator.clone(),
        target_std: ds.meta.target_std,
    };
    let header = Header {
        content: DATASET_CONTENT.into(),
        dtype: Dtype::F32,
        arrays: vec![
            ArrayDecl {
                name: "f_grid".into(),
                shape: vec![count, g, g],
            },
            ArrayDecl {
                name: "u_grid".into(),
                shape: vec![count, g, g],
            },
        ],
        meta: serde_json::to_value(info).map_err(|e| PersistError::Metadata(e.to_string()))?,
    };
    let f: Vec<f64> = ds.pairs.iter().flat_map(|p| p.f_grid.iter().copied()).collect();
    let u: Vec<f64> = ds.pairs.iter().flat_map(|p| p.u_grid.iter().copied()).collect();
    encode(&header, &[&f, &u])
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let (header, arrays) = decode(bytes)?;
    if header.content != DATASET_CONTENT {
        return Err(PersistError::Metadata(format!("expected a dataset, found `{}`", header.content)));
    }
    let info: DatasetInfo =
        serde_json::from_value(header.meta).map_err(|e| PersistError::Metadata(e.to_string()))?;
    let per_pair = info.grid_res * info.grid_res;
    if arrays.len() != 2 || arrays.iter().any(|a| a.len() != info.count * per_pair) {
        return Err(PersistError::Truncated(format!(
            "metadata declares {} pairs of {}², payload disagrees",
            info.count, info.grid_res
        )));
    }
    let pairs = arrays[0]
        .chunks_exact(per_pair)
        .zip(arrays[1].chunks_exact(per_pair))
        .map(|(f, u)| FieldPair {
            f_grid: f.to_vec(),
            u_grid: u.to_vec(),
        })
        .collect();
    Ok(Dataset {
        pde: info.pde_tag,
        grid_res: info.grid_res,
        pairs,
        meta: DatasetMeta {
            seed: info.seed,
            pair_seeds: info.pair_seeds,
            generator: info.spec,
            target_std: info.target_std,
        },
    })
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    Ok(fs::write(path, encode_dataset(ds)?)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

/// A trained model plus what is needed to apply it to raw fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub normalizer: Normalizer,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointInfo {
    model_kind: ModelKind,
    c_in: usize,
    model_config: ModelConfig,
    normalizer: Normalizer,
    seed: u64,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let info = CheckpointInfo {
        model_kind: ck.model.kind,
        c_in: ck.model.c_in,
        model_config: ck.model.config.clone(),
        normalizer: ck.normalizer,
        seed: ck.seed,
    };
    let params: Vec<(&str, &Tensor)> = ck.model.params.iter().collect();
    let header = Header {
        content: CHECKPOINT_CONTENT.into(),
        dtype: Dtype::F64,
        arrays: params
            .iter()
            .map(|(name, t)| ArrayDecl {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta: serde_json::to_value(info).map_err(|e| PersistError::Metadata(e.to_string()))?,
    };
    let values: Vec<&[f64]> = params.iter().map(|(_, t)| t.data()).collect();
    encode(&header, &values)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (header, arrays) = decode(bytes)?;
    if header.content != CHECKPOINT_CONTENT {
        return Err(PersistError::Metadata(format!(
            "expected a checkpoint, found `{}`",
            header.content
        )));
    }
    let info: CheckpointInfo =
        serde_json::from_value(header.meta).map_err(|e| PersistError::Metadata(e.to_string()))?;
    let mut params = ParamStore::new();
    for (decl, values) in header.arrays.into_iter().zip(arrays) {
        let t = Tensor::new(&decl.shape, values).map_err(|e| PersistError::Metadata(e.to_string()))?;
        params
            .insert(decl.name, t)
            .map_err(|e| PersistError::Metadata(e.to_string()))?;
    }
    // the parameter names must be exactly those the configuration creates
    let fresh = Model::new(info.model_kind, &info.model_config, info.c_in, 0)
        .map_err(|e| PersistError::Metadata(e.to_string()))?;
    let shapes = |s: &ParamStore| -> Vec<(String, Vec<usize>)> {
        s.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect()
    };
    if shapes(&fresh.params) != shapes(&params) {
        return Err(PersistError::Metadata("parameter set does not match the model config".into()));
    }
    Ok(Checkpoint {
        model: Model {
            kind: info.model_kind,
            config: info.model_config,
            c_in: info.c_in,
            params,
        },
        normalizer: info.normalizer,
        seed: info.seed,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    Ok(fs::write(path, encode_checkpoint(ck)?)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdedata;

    fn tiny() -> Dataset {
        pdedata::generate(PdeKind::Advection, 9, 2, 7, 1).unwrap()
    }

    #[test]
    fn dataset_round_trip_is_bit_identical() {
        let ds = tiny();
        let back = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
        assert_eq!(back, ds);
        for (a, b) in ds.pairs.iter().zip(&back.pairs) {
            for (x, y) in a.u_grid.iter().zip(&b.u_grid) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn header_starts_with_magic_and_version() {
        let bytes = encode_dataset(&tiny()).unwrap();
        assert_eq!(&bytes[..4], b"GOLA");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
    }

    #[test]
    fn corruptions_map_to_distinct_errors() {
        let good = encode_dataset(&tiny()).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(PersistError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(decode_dataset(&bad), Err(PersistError::VersionMismatch { found: 9, .. })));
        let short = &good[..good.len() - 3];
        assert!(matches!(decode_dataset(short), Err(PersistError::Truncated(_))));
        let codes: std::collections::BTreeSet<u8> = [
            decode_dataset(&[]).unwrap_err().code(),
            decode_dataset(&bad).unwrap_err().code(),
            decode_dataset(short).unwrap_err().code(),
        ]
        .into();
        assert_eq!(codes.len(), 3);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let mut cfg = ModelConfig::default();
        cfg.gola.channels = 8;
        cfg.gola.modes = 4;
        cfg.gola.head_dim = 4;
        let model = Model::new(ModelKind::Gola, &cfg, 1, 3).unwrap();
        let ck = Checkpoint {
            model,
            normalizer: Normalizer::identity(),
            seed: 3,
        };
        let back = decode_checkpoint(&encode_checkpoint(&ck).unwrap()).unwrap();
        assert_eq!(back, ck);
        assert!(decode_dataset(&encode_checkpoint(&ck).unwrap()).is_err());
    }
}
