use std::path::PathBuf;

use half::f16;
use serde::{Deserialize, Serialize};

use super::npy::{Dtype, NpyRecord};
use crate::error::{Error, FormatError, Result};

/// Element precision of a stored volume.
pub type Precision = Dtype;

/// Voxel storage in one of the supported precisions.
#[derive(Clone, Debug, PartialEq)]
pub enum VoxelData {
    F64(Vec<f64>),
    F32(Vec<f32>),
    F16(Vec<f16>),
    I16(Vec<i16>),
    I8(Vec<i8>),
    U8(Vec<u8>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::F64(v) => v.len(),
            VoxelData::F32(v) => v.len(),
            VoxelData::F16(v) => v.len(),
            VoxelData::I16(v) => v.len(),
            VoxelData::I8(v) => v.len(),
            VoxelData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn precision(&self) -> Precision {
        match self {
            VoxelData::F64(_) => Dtype::F64,
            VoxelData::F32(_) => Dtype::F32,
            VoxelData::F16(_) => Dtype::F16,
            VoxelData::I16(_) => Dtype::I16,
            VoxelData::I8(_) => Dtype::I8,
            VoxelData::U8(_) => Dtype::U8,
        }
    }

    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            VoxelData::F64(v) => v[i],
            VoxelData::F32(v) => v[i] as f64,
            VoxelData::F16(v) => v[i].to_f64(),
            VoxelData::I16(v) => v[i] as f64,
            VoxelData::I8(v) => v[i] as f64,
            VoxelData::U8(v) => v[i] as f64,
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get_f64(i)).collect()
    }
}

/// Where a volume came from and what has been applied to it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<PathBuf>,
    pub history: Vec<String>,
}

/// A `d x h x w` scalar volume, row-major with `w` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    data: VoxelData,
    pub provenance: Provenance,
}

impl Volume3D {
    pub fn new(dims: [usize; 3], data: VoxelData) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::contract(format!("volume dims must be positive, got {dims:?}")));
        }
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::contract(format!(
                "volume {dims:?} needs {expected} voxels, got {}",
                data.len()
            )));
        }
        Ok(Self {
            dims,
            data,
            provenance: Provenance::default(),
        })
    }

    pub fn from_f64(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        Self::new(dims, VoxelData::F64(data))
    }

    pub fn with_history(mut self, step: impl Into<String>) -> Self {
        self.provenance.history.push(step.into());
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn precision(&self) -> Precision {
        self.data.precision()
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> f64 {
        let [_, h, w] = self.dims;
        self.data.get_f64((z * h + y) * w + x)
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.to_f64_vec()
    }

    /// Values widened to `f64` (identity for `F64` volumes).
    pub fn as_f64(&self) -> Volume3D {
        Volume3D {
            dims: self.dims,
            data: match &self.data {
                VoxelData::F64(v) => VoxelData::F64(v.clone()),
                other => VoxelData::F64(other.to_f64_vec()),
            },
            provenance: self.provenance.clone(),
        }
    }

    /// The `index`-th slice along the first axis, widened to `f64`.
    pub fn slice_f64(&self, index: usize) -> Vec<f64> {
        let plane = self.dims[1] * self.dims[2];
        (index * plane..(index + 1) * plane)
            .map(|i| self.data.get_f64(i))
            .collect()
    }

    pub fn to_npy(&self) -> NpyRecord {
        let shape = self.dims;
        let r = match &self.data {
            VoxelData::F64(v) => NpyRecord::from_slice(&shape, v),
            VoxelData::F32(v) => NpyRecord::from_slice(&shape, v),
            VoxelData::F16(v) => NpyRecord::from_slice(&shape, v),
            VoxelData::I16(v) => NpyRecord::from_slice(&shape, v),
            VoxelData::I8(v) => NpyRecord::from_slice(&shape, v),
            VoxelData::U8(v) => NpyRecord::from_slice(&shape, v),
        };
        r.expect("volume length matches its dims")
    }

    pub fn from_npy(record: &NpyRecord) -> Result<Self> {
        let dims: [usize; 3] = record
            .shape
            .as_slice()
            .try_into()
            .map_err(|_| FormatError::Header(format!("expected a 3-D array, got shape {:?}", record.shape)))?;
        let data = match record.dtype {
            Dtype::F64 => VoxelData::F64(record.to_vec()?),
            Dtype::F32 => VoxelData::F32(record.to_vec()?),
            Dtype::F16 => VoxelData::F16(record.to_vec()?),
            Dtype::I16 => VoxelData::I16(record.to_vec()?),
            Dtype::I8 => VoxelData::I8(record.to_vec()?),
            Dtype::U8 => VoxelData::U8(record.to_vec()?),
        };
        Self::new(dims, data)
    }
}
