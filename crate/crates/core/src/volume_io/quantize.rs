use half::f16;

use super::volume::{Volume3D, VoxelData};
use crate::error::{FormatError, Result};

/// Tolerance for snapping mask values onto `{0, 1}`.
pub const MASK_SNAP_TOL: f64 = 1e-9;

/// Rounds scan intensities to IEEE binary16 (round to nearest, ties to even).
///
/// Values outside the half-precision range are rejected instead of being
/// turned into infinities.
pub fn quantize_scan(volume: &Volume3D) -> Result<Volume3D> {
    let data = volume
        .to_f64_vec()
        .into_iter()
        .map(|v| {
            let h = f16::from_f64(v);
            if v.is_finite() && !h.is_finite() {
                Err(FormatError::HalfOverflow(v))
            } else {
                Ok(h)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Volume3D::new(volume.dims(), VoxelData::F16(data))?;
    out.provenance = volume.provenance.clone();
    Ok(out.with_history("quantize_scan:f16"))
}

/// Converts a binary mask to `i8`, snapping values within
/// [`MASK_SNAP_TOL`] of 0 or 1.
pub fn quantize_mask(volume: &Volume3D) -> Result<Volume3D> {
    let data = volume
        .to_f64_vec()
        .into_iter()
        .map(snap_binary)
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Volume3D::new(volume.dims(), VoxelData::I8(data))?;
    out.provenance = volume.provenance.clone();
    Ok(out.with_history("quantize_mask:i8"))
}

pub fn snap_binary(v: f64) -> Result<i8, FormatError> {
    if (v - 0.0).abs() <= MASK_SNAP_TOL {
        Ok(0)
    } else if (v - 1.0).abs() <= MASK_SNAP_TOL {
        Ok(1)
    } else {
        Err(FormatError::NonBinaryMask(v))
    }
}
