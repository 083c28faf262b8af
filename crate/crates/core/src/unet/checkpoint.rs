//! Single-file model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"UNETCKPT"            8 bytes
//! format version         u32
//! manifest length        u64
//! manifest               JSON, `manifest length` bytes
//! records                concatenated NPY v1.0 arrays
//! ```
//!
//! The manifest holds the architecture, config and seed, plus one entry per
//! parameter with its byte offset (relative to the first record) and length.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_unet, ArchitectureKind, UNetConfig, UNetModel};
use crate::error::{Error, FormatError, Result};
use crate::tensor::num_like::Element;
use crate::tensor::Tensor;
use crate::volume_io::{read_npy, write_npy, Dtype, NpyRecord};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UNETCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub offset: u64,
    pub length: u64,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub kind: ArchitectureKind,
    pub config: UNetConfig,
    pub seed: u64,
    pub dtype: String,
    pub parameter_count: u64,
    pub entries: Vec<CheckpointEntry>,
}

/// A decoded checkpoint: manifest plus one NPY record per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub records: Vec<NpyRecord>,
}

fn tensor_record<T: Element>(t: &Tensor<T>) -> NpyRecord {
    let shape = t.shape().dims();
    let r = match T::NPY_DESCR {
        "<f4" => {
            let v: Vec<f32> = t.data().iter().map(|x| x.to_f64() as f32).collect();
            NpyRecord::from_slice(&shape, &v)
        }
        _ => {
            let v: Vec<f64> = t.data().iter().map(|x| x.to_f64()).collect();
            NpyRecord::from_slice(&shape, &v)
        }
    };
    r.expect("tensor length matches its shape")
}

impl Checkpoint {
    pub fn from_model<T: Element>(model: &UNetModel<T>) -> Self {
        let mut entries = Vec::new();
        let mut records = Vec::new();
        let mut offset = 0u64;
        for p in model.params() {
            let rec = tensor_record(&p.value);
            let length = write_npy(&rec).expect("row-major record").len() as u64;
            entries.push(CheckpointEntry {
                name: p.name.clone(),
                offset,
                length,
                shape: rec.shape.clone(),
            });
            offset += length;
            records.push(rec);
        }
        Self {
            manifest: CheckpointManifest {
                kind: model.kind(),
                config: model.config().clone(),
                seed: model.seed(),
                dtype: T::NPY_DESCR.to_string(),
                parameter_count: model.runtime_parameter_count(),
                entries,
            },
            records,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for r in &self.records {
            out.extend_from_slice(&write_npy(r).expect("row-major record"));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(FormatError::BadMagic("not a UNETCKPT checkpoint".into()).into());
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(FormatError::BadMagic(format!("checkpoint version {version}")).into());
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let data_start = 20 + mlen;
        if bytes.len() < data_start {
            return Err(FormatError::Truncated {
                expected: data_start,
                found: bytes.len(),
            }
            .into());
        }
        let manifest: CheckpointManifest = serde_json::from_slice(&bytes[20..data_start])
            .map_err(|e| FormatError::Header(format!("checkpoint manifest: {e}")))?;
        let data = &bytes[data_start..];
        let records = manifest
            .entries
            .iter()
            .map(|e| {
                let (start, end) = (e.offset as usize, (e.offset + e.length) as usize);
                if end > data.len() {
                    return Err(FormatError::Truncated {
                        expected: data_start + end,
                        found: bytes.len(),
                    });
                }
                read_npy(&data[start..end])
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { manifest, records })
    }

    /// Rebuilds the model graph and loads every parameter into it.
    pub fn into_model<T: Element>(self) -> Result<UNetModel<T>> {
        let m = &self.manifest;
        let mut model: UNetModel<T> = build_unet(m.kind, &m.config, m.seed)?;
        if m.entries.len() != model.params().len() {
            return Err(FormatError::Header(format!(
                "checkpoint has {} tensors, model expects {}",
                m.entries.len(),
                model.params().len()
            ))
            .into());
        }
        for ((entry, rec), p) in m.entries.iter().zip(&self.records).zip(model.params_mut()) {
            if entry.name != p.name || rec.shape != p.value.shape().dims() {
                return Err(FormatError::Header(format!(
                    "checkpoint tensor {} {:?} does not match model tensor {} {}",
                    entry.name,
                    rec.shape,
                    p.name,
                    p.value.shape()
                ))
                .into());
            }
            if !matches!(rec.dtype, Dtype::F32 | Dtype::F64) {
                return Err(FormatError::UnsupportedDatatype(rec.dtype.descr().into()).into());
            }
            let values: Vec<T> = rec.to_f64_vec().into_iter().map(T::from_f64).collect();
            p.value = Tensor::from_vec(p.value.shape(), values)?;
        }
        Ok(model)
    }
}

pub fn save_checkpoint<T: Element>(model: &UNetModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, Checkpoint::from_model(model).to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Element>(path: impl AsRef<Path>) -> Result<UNetModel<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)?.into_model()
}
