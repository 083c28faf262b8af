//! Volume containers and the on-disk formats of the data pipeline:
//! NIfTI-1 ingestion, NPY arrays, half-precision/int8 quantization and a
//! lazily loaded slice store.

pub mod nifti;
pub mod npy;
mod quantize;
mod store;
mod volume;

use std::path::Path;

pub use nifti::{read_nifti, write_nifti, NiftiHeader};
pub use npy::{read_npy, write_npy, Dtype, NpyElement, NpyRecord};
pub use quantize::{quantize_mask, quantize_scan, snap_binary, MASK_SNAP_TOL};
pub use store::{open_lazy, Slice, VolumeStore, DEFAULT_SLICE_BUDGET};
pub use volume::{Precision, Provenance, Volume3D, VoxelData};

use crate::error::{Error, Result};

pub fn read_npy_file(path: impl AsRef<Path>) -> Result<NpyRecord> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(read_npy(&bytes)?)
}

pub fn write_npy_file(path: impl AsRef<Path>, record: &NpyRecord) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_npy(record)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a volume from `.npy` or uncompressed `.nii`, picking the reader
/// by extension.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("npy") => {
            let mut v = Volume3D::from_npy(&read_npy_file(path)?)?;
            v.provenance.source = Some(path.to_path_buf());
            Ok(v)
        }
        Some("nii") | Some("hdr") => read_nifti(path),
        Some("gz") => Err(Error::Config(format!(
            "{}: compressed NIfTI is not supported; decompress it first (e.g. `gunzip -k`)",
            path.display()
        ))),
        _ => Err(Error::Config(format!(
            "{}: unrecognized volume extension (expected .npy or .nii)",
            path.display()
        ))),
    }
}

pub fn write_volume_npy(path: impl AsRef<Path>, volume: &Volume3D) -> Result<()> {
    write_npy_file(path, &volume.to_npy())
}
