use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::dataset::AugmentedTree;
use crate::augment::{expand_scan, write_augmented, znorm, AugmentationPlan, Region, ZNormStats};
use crate::error::{Error, Result};
use crate::phantom::phantom_volume;
use crate::tensor::Tensor;
use crate::train::{bce_loss, dice_coefficient, emit_curves, fit, pixel_accuracy, FitReport};
use crate::unet::{build_unet, load_checkpoint, save_checkpoint, ArchitectureKind, UNetModel};
use crate::volume_io::{quantize_mask, quantize_scan, read_volume, write_nifti, write_volume_npy, Volume3D, VoxelData};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CURVES_FILE: &str = "curves.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Probability threshold for the binary mask.
pub const MASK_THRESHOLD: f64 = 0.5;

/// File name without its volume extension(s).
pub fn scan_id(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    for ext in [".nii.gz", ".nii", ".npy", ".hdr"] {
        if let Some(stem) = name.strip_suffix(ext) {
            return stem.to_string();
        }
    }
    name
}

fn unique_ids(paths: &[PathBuf]) -> Result<Vec<String>> {
    let ids: Vec<String> = paths.iter().map(|p| scan_id(p)).collect();
    let distinct: BTreeSet<&String> = ids.iter().collect();
    if distinct.len() != ids.len() {
        return Err(Error::Config(
            "scan file names must be unique after removing extensions".into(),
        ));
    }
    Ok(ids)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("`{key}` must be set")))
}

fn scan_mask_pairs(cfg: &RunConfig) -> Result<()> {
    if cfg.data.scans.is_empty() {
        return Err(Error::EmptyDataset("data.scans lists no files".into()));
    }
    if !cfg.data.masks.is_empty() && cfg.data.masks.len() != cfg.data.scans.len() {
        return Err(Error::Config(format!(
            "data.masks has {} entries for {} scans",
            cfg.data.masks.len(),
            cfg.data.scans.len()
        )));
    }
    Ok(())
}

/// Sidecar written next to each preprocessed volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub source: PathBuf,
    pub dims: [usize; 3],
    pub stats: ZNormStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessOutput {
    pub volume: PathBuf,
    pub sidecar: PathBuf,
    pub record: PreprocessRecord,
}

/// Z-normalizes every scan and writes `{out}/{id}.npy` (f16) plus
/// `{out}/{id}.json`. Statistics come from the matching mask when masks
/// are configured, otherwise from the nonzero voxels.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<Vec<PreprocessOutput>> {
    scan_mask_pairs(cfg)?;
    let ids = unique_ids(&cfg.data.scans)?;
    create_dir(&cfg.out)?;
    let mut outputs = Vec::new();
    for (i, (path, id)) in cfg.data.scans.iter().zip(&ids).enumerate() {
        let scan = read_volume(path)?;
        let result = match cfg.data.masks.get(i) {
            Some(mask_path) => {
                let mask = read_volume(mask_path)?;
                znorm(&scan, Region::Mask(&mask))
            }
            None => znorm(&scan, Region::Nonzero),
        };
        let (normed, stats) = result.map_err(|e| e.in_file(path))?;
        let volume = cfg.out.join(format!("{id}.npy"));
        write_volume_npy(&volume, &quantize_scan(&normed).map_err(|e| e.in_file(path))?)?;
        let record = PreprocessRecord {
            source: path.clone(),
            dims: scan.dims(),
            stats,
        };
        let sidecar = cfg.out.join(format!("{id}.json"));
        write_json(&sidecar, &record)?;
        log::info!(
            "{}: mu {:.6} sigma {:.6}",
            path.display(),
            stats.mu_brain,
            stats.sigma_brain
        );
        outputs.push(PreprocessOutput {
            volume,
            sidecar,
            record,
        });
    }
    Ok(outputs)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentSummary {
    pub scans: usize,
    pub copies: usize,
    pub slices: usize,
}

/// Expands every (scan, mask) pair `data.factor` times into
/// `{out}/{id}/{copy}/`. Scans are processed one at a time.
pub fn cmd_augment(cfg: &RunConfig) -> Result<AugmentSummary> {
    scan_mask_pairs(cfg)?;
    if cfg.data.masks.is_empty() {
        return Err(Error::Config("augment needs data.masks".into()));
    }
    let ids = unique_ids(&cfg.data.scans)?;
    let plan = AugmentationPlan::new(cfg.data.factor, cfg.seed)?;
    create_dir(&cfg.out)?;
    let mut summary = AugmentSummary {
        scans: 0,
        copies: 0,
        slices: 0,
    };
    for (i, ((scan_path, mask_path), id)) in cfg.data.scans.iter().zip(&cfg.data.masks).zip(&ids).enumerate() {
        let scan = read_volume(scan_path)?;
        let mask = read_volume(mask_path)?;
        let copies = expand_scan(i, &scan, &mask, &plan).map_err(|e| e.in_file(scan_path))?;
        for copy in &copies {
            write_augmented(&cfg.out, id, copy)?;
            summary.slices += copy.scan.dims()[0];
        }
        summary.scans += 1;
        summary.copies += copies.len();
        log::info!("{}: {} copies", scan_path.display(), copies.len());
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMembership {
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

/// Everything needed to reproduce or audit a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub config_hash: String,
    pub seed: u64,
    pub arch: ArchitectureKind,
    pub parameter_count: u64,
    pub analytic_parameter_count: u64,
    pub split: SplitMembership,
    pub train_slices: usize,
    pub validation_slices: usize,
    pub updates: u64,
    pub epochs: usize,
    pub stopped_early: bool,
    pub best_epoch: usize,
    pub checkpoint: String,
    pub curves: String,
    pub config: RunConfig,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub manifest: TrainManifest,
    pub report: FitReport,
}

/// Trains on the augmented tree at `data.augmented` and writes the
/// checkpoint, curves CSV and manifest into `out`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput> {
    let root = require(&cfg.data.augmented, "data.augmented")?;
    let data = AugmentedTree::open(root, cfg.data.slice_budget)?;
    let (h, w) = crate::train::SliceDataset::slice_shape(&data);
    cfg.model.check_spatial(h, w)?;
    if (h, w) != (cfg.model.height, cfg.model.width) {
        return Err(Error::Config(format!(
            "slices are {h}x{w} but model.height/model.width are {}x{}",
            cfg.model.height, cfg.model.width
        )));
    }
    let mut model: UNetModel<f32> = build_unet(cfg.arch, &cfg.model, cfg.seed)?;
    let report = fit(&mut model, &data, &cfg.training())?;

    create_dir(&cfg.out)?;
    save_checkpoint(&model, cfg.out.join(CHECKPOINT_FILE))?;
    emit_curves(&report.records, cfg.out.join(CURVES_FILE))?;
    let names = |groups: &[usize]| groups.iter().map(|&g| data.scan_ids()[g].clone()).collect();
    let manifest = TrainManifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        arch: cfg.arch,
        parameter_count: model.runtime_parameter_count(),
        analytic_parameter_count: model.analytic_parameter_count(),
        split: SplitMembership {
            train: names(&report.split.train_groups),
            validation: names(&report.split.val_groups),
        },
        train_slices: report.split.train_slices.len(),
        validation_slices: report.split.val_slices.len(),
        updates: report.updates,
        epochs: report.records.len(),
        stopped_early: report.stopped_early,
        best_epoch: report.best_epoch,
        checkpoint: CHECKPOINT_FILE.into(),
        curves: CURVES_FILE.into(),
        config: cfg.clone(),
    };
    write_json(&cfg.out.join(MANIFEST_FILE), &manifest)?;
    Ok(TrainOutput { manifest, report })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub bce: f64,
    pub pixel_accuracy: f64,
    pub dice: f64,
}

/// Outputs of a skull-strip prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionResult {
    /// Sigmoid outputs, `f32`.
    pub probability: Volume3D,
    /// `probability >= 0.5`, `i8`.
    pub mask: Volume3D,
    /// Mask applied to the z-normalized input, `f64`.
    pub stripped: Volume3D,
    /// Mask applied to the raw input, `f64`.
    pub stripped_raw: Volume3D,
}

fn masked(mask: &[bool], values: &[f64]) -> Vec<f64> {
    mask.iter()
        .zip(values)
        .map(|(&m, &v)| if m { v } else { 0.0 })
        .collect()
}

impl PredictionResult {
    pub fn from_probabilities(probability: Vec<f32>, znormed: &Volume3D, raw: &Volume3D) -> Result<Self> {
        let dims = raw.dims();
        if znormed.dims() != dims {
            return Err(Error::contract("z-normalized and raw volumes differ in dims"));
        }
        let keep: Vec<bool> = probability.iter().map(|&p| p as f64 >= MASK_THRESHOLD).collect();
        let mask = Volume3D::new(dims, VoxelData::I8(keep.iter().map(|&k| k as i8).collect()))?;
        let stripped = Volume3D::from_f64(dims, masked(&keep, &znormed.to_f64_vec()))?;
        let stripped_raw = Volume3D::from_f64(dims, masked(&keep, &raw.to_f64_vec()))?;
        Ok(Self {
            probability: Volume3D::new(dims, VoxelData::F32(probability))?,
            mask,
            stripped,
            stripped_raw,
        })
    }

    pub fn score(&self, ground_truth: &Volume3D) -> Result<PredictionMetrics> {
        if ground_truth.dims() != self.mask.dims() {
            return Err(Error::contract(format!(
                "ground truth dims {:?} differ from prediction dims {:?}",
                ground_truth.dims(),
                self.mask.dims()
            )));
        }
        let truth = ground_truth.to_f64_vec();
        let prob = self.probability.to_f64_vec();
        Ok(PredictionMetrics {
            bce: bce_loss(&prob, &truth)?,
            pixel_accuracy: pixel_accuracy(&prob, &truth, MASK_THRESHOLD)?,
            dice: dice_coefficient(&self.mask.to_f64_vec(), &truth)?,
        })
    }
}

/// Z-normalizes `raw` over its nonzero voxels and runs the model slice by
/// slice along the first axis, `batch_size` slices per pass.
pub fn predict_volume(model: &UNetModel<f32>, raw: &Volume3D, batch_size: usize) -> Result<PredictionResult> {
    let [d, h, w] = raw.dims();
    model.config().check_spatial(h, w)?;
    let (znormed, _) = znorm(raw, Region::Nonzero)?;
    let values: Vec<f32> = znormed.to_f64_vec().iter().map(|&v| v as f32).collect();
    let plane = h * w;
    let mut probability = Vec::with_capacity(d * plane);
    for start in (0..d).step_by(batch_size.max(1)) {
        let n = batch_size.max(1).min(d - start);
        let batch = Tensor::from_vec([n, 1, h, w], values[start * plane..(start + n) * plane].to_vec())?;
        probability.extend_from_slice(model.forward(&batch)?.data());
    }
    PredictionResult::from_probabilities(probability, &znormed, raw)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictOutput {
    pub result: PredictionResult,
    pub metrics: Option<PredictionMetrics>,
    pub files: Vec<PathBuf>,
}

/// Loads `predict.checkpoint`, predicts `predict.input` and writes
/// `prob.npy`, `mask.npy`, `stripped.npy`, `stripped_raw.npy` (and
/// `metrics.json` when `predict.ground_truth` is set) into `out`.
pub fn cmd_predict(cfg: &RunConfig) -> Result<PredictOutput> {
    let ckpt = require(&cfg.predict.checkpoint, "predict.checkpoint")?;
    let input = require(&cfg.predict.input, "predict.input")?;
    let model: UNetModel<f32> = load_checkpoint(ckpt).map_err(|e| e.in_file(ckpt))?;
    let raw = read_volume(input)?;
    let result = predict_volume(&model, &raw, cfg.predict.batch_size).map_err(|e| e.in_file(input))?;
    create_dir(&cfg.out)?;
    let mut files = Vec::new();
    for (name, vol) in [
        ("prob.npy", &result.probability),
        ("mask.npy", &result.mask),
        ("stripped.npy", &result.stripped),
        ("stripped_raw.npy", &result.stripped_raw),
    ] {
        let path = cfg.out.join(name);
        write_volume_npy(&path, vol)?;
        files.push(path);
    }
    let metrics = match &cfg.predict.ground_truth {
        Some(gt_path) => {
            let gt = quantize_mask(&read_volume(gt_path)?).map_err(|e| e.in_file(gt_path))?;
            let m = result.score(&gt).map_err(|e| e.in_file(gt_path))?;
            let path = cfg.out.join("metrics.json");
            write_json(&path, &m)?;
            files.push(path);
            Some(m)
        }
        None => None,
    };
    Ok(PredictOutput { result, metrics, files })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeFormat {
    Npy,
    Nii,
}

/// Writes `count` synthetic head phantoms and their brain masks as
/// `{out}/phantom_{i}.{ext}` and `{out}/phantom_{i}_mask.{ext}`.
pub fn cmd_phantom(
    out: &Path,
    count: usize,
    dims: [usize; 3],
    seed: u64,
    format: VolumeFormat,
) -> Result<Vec<(PathBuf, PathBuf)>> {
    if count == 0 {
        return Err(Error::Config("phantom count must be at least 1".into()));
    }
    create_dir(out)?;
    let ext = match format {
        VolumeFormat::Npy => "npy",
        VolumeFormat::Nii => "nii",
    };
    (0..count)
        .map(|i| {
            let (scan, mask) = phantom_volume(dims, seed.wrapping_add(i as u64))?;
            let scan_path = out.join(format!("phantom_{i:03}.{ext}"));
            let mask_path = out.join(format!("phantom_{i:03}_mask.{ext}"));
            match format {
                VolumeFormat::Npy => {
                    write_volume_npy(&scan_path, &scan)?;
                    write_volume_npy(&mask_path, &mask)?;
                }
                VolumeFormat::Nii => {
                    write_nifti(&scan_path, &scan)?;
                    write_nifti(&mask_path, &mask)?;
                }
            }
            Ok((scan_path, mask_path))
        })
        .collect()
}
