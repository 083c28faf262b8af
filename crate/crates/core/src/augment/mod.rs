//! Z-normalization, the augmentation transform catalogue, fivefold dataset
//! expansion and slice extraction.
//!
//! Each augmented copy is produced as: z-normalize with the brain mask,
//! then spatial transforms, then intensity transforms.

mod transform;
mod znorm;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use transform::{
    apply_transform, apply_transform_volume, FlipAxis, Primitive, TransformSpec, GAMMA_RANGE, MAX_BIAS_AMPLITUDE,
    MAX_NOISE_SIGMA, MAX_ROTATION_DEG, MAX_SHIFT, SCALE_RANGE,
};
pub use znorm::{region_stats, znorm, Region, RegionKind, ZNormStats, MIN_STD};

use crate::error::{Error, Result};
use crate::volume_io::{quantize_mask, quantize_scan, write_volume_npy, Volume3D};

pub const DEFAULT_FACTOR: usize = 5;

/// Order in which a copy's steps are applied; recorded in every sidecar.
pub const STEP_ORDER: &str = "znorm,spatial,intensity";

/// How many copies to make of each scan and how their transforms are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub factor: usize,
    pub seed: u64,
}

impl AugmentationPlan {
    pub fn new(factor: usize, seed: u64) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Config("augmentation factor must be at least 1".into()));
        }
        Ok(Self { factor, seed })
    }

    /// Transform for copy `copy` of scan `scan`. Copy 0 is the identity.
    /// Each (scan, copy) pair draws from its own ChaCha stream, so the
    /// result does not depend on processing order.
    pub fn spec_for(&self, scan: usize, copy: usize) -> TransformSpec {
        if copy == 0 {
            return TransformSpec::identity();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((scan * self.factor + copy) as u64);
        TransformSpec::random(&mut rng)
    }
}

/// One augmented copy of a scan.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedScan {
    pub scan_index: usize,
    pub copy_index: usize,
    pub spec: TransformSpec,
    pub stats: ZNormStats,
    pub scan: Volume3D,
    pub mask: Volume3D,
}

/// Sidecar written next to each augmented copy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub scan_id: String,
    pub copy_index: usize,
    pub step_order: String,
    pub znorm: ZNormStats,
    pub transform: TransformSpec,
}

/// All copies of one scan.
pub fn expand_scan(
    scan_index: usize,
    scan: &Volume3D,
    mask: &Volume3D,
    plan: &AugmentationPlan,
) -> Result<Vec<AugmentedScan>> {
    let (normed, stats) = znorm(scan, Region::Mask(mask))?;
    (0..plan.factor)
        .into_par_iter()
        .map(|copy| {
            let spec = plan.spec_for(scan_index, copy);
            let (s, m) = apply_transform_volume(&normed, mask, &spec)?;
            Ok(AugmentedScan {
                scan_index,
                copy_index: copy,
                spec,
                stats,
                scan: s,
                mask: m,
            })
        })
        .collect()
}

/// `factor` copies of every `(scan, mask)` pair, ordered by scan then copy.
pub fn expand_dataset(scans: &[(Volume3D, Volume3D)], plan: &AugmentationPlan) -> Result<Vec<AugmentedScan>> {
    if scans.is_empty() {
        return Err(Error::EmptyDataset("no scans to augment".into()));
    }
    let per_scan: Vec<Vec<AugmentedScan>> = scans
        .par_iter()
        .enumerate()
        .map(|(i, (s, m))| expand_scan(i, s, m, plan))
        .collect::<Result<_>>()?;
    Ok(per_scan.into_iter().flatten().collect())
}

/// A 2D slice tagged with where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice2D {
    pub scan_id: String,
    pub index: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Slices along the first axis, in order.
pub fn extract_slices(volume: &Volume3D, scan_id: &str) -> Vec<Slice2D> {
    let [d, h, w] = volume.dims();
    (0..d)
        .map(|index| Slice2D {
            scan_id: scan_id.to_string(),
            index,
            height: h,
            width: w,
            data: volume.slice_f64(index),
        })
        .collect()
}

/// Inverse of [`extract_slices`].
pub fn stack_slices(slices: &[Slice2D]) -> Result<Volume3D> {
    let first = slices
        .first()
        .ok_or_else(|| Error::EmptyDataset("no slices to stack".into()))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(slices.len() * h * w);
    for s in slices {
        if (s.height, s.width) != (h, w) || s.data.len() != h * w {
            return Err(Error::contract(format!(
                "slice {} of {} is {}x{}, expected {h}x{w}",
                s.index, s.scan_id, s.height, s.width
            )));
        }
        data.extend_from_slice(&s.data);
    }
    Volume3D::from_f64([slices.len(), h, w], data)
}

/// Directory holding one augmented copy: `{out}/{scan_id}/{copy}`.
pub fn copy_dir(out: &Path, scan_id: &str, copy: usize) -> PathBuf {
    out.join(scan_id).join(copy.to_string())
}

/// Writes `scan.npy` (f16), `mask.npy` (i8) and `transform.json`.
pub fn write_augmented(out: &Path, scan_id: &str, item: &AugmentedScan) -> Result<PathBuf> {
    let dir = copy_dir(out, scan_id, item.copy_index);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_volume_npy(dir.join("scan.npy"), &quantize_scan(&item.scan)?)?;
    write_volume_npy(dir.join("mask.npy"), &quantize_mask(&item.mask)?)?;
    let record = TransformRecord {
        scan_id: scan_id.to_string(),
        copy_index: item.copy_index,
        step_order: STEP_ORDER.to_string(),
        znorm: item.stats,
        transform: item.spec.clone(),
    };
    let path = dir.join("transform.json");
    let mut text = serde_json::to_string_pretty(&record).expect("record serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(dir)
}
