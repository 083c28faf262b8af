//! Adam training with inverse-time learning-rate decay, early stopping on
//! validation loss, and the evaluation metrics.

mod adam;
mod curves;
mod early_stop;
mod metrics;

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, effective_lr, AdamState};
pub use curves::{curves_csv, emit_curves, parse_curves, CURVES_HEADER};
pub use early_stop::{Decision, EarlyStopper};
pub use metrics::{bce_loss, dice_coefficient, pixel_accuracy};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::num_like::Element;
use crate::tensor::Tensor;
use crate::unet::UNetModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// Set from the run seed; not read from config files.
    #[serde(skip)]
    pub seed: u64,
    /// Fraction of scans held out for validation.
    pub val_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 1.99e-7,
            batch_size: 32,
            patience: 2,
            max_epochs: 50,
            seed: 0,
            val_fraction: 0.10,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || self.decay.is_nan() || self.decay < 0.0 {
            return bad("epsilon must be positive and decay non-negative");
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch_size, patience and max_epochs must be at least 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// One row of the training curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Effective learning rate after the epoch's last update.
    pub learning_rate: f64,
    pub wall_time_s: f64,
}

/// A collection of equally sized single-channel slices with binary masks.
///
/// `group` identifies the scan a slice came from; the train/validation split
/// never separates slices of one group.
pub trait SliceDataset: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// `(height, width)` shared by every slice.
    fn slice_shape(&self) -> (usize, usize);
    fn group(&self, index: usize) -> usize;
    /// Returns `(image, mask)` in row-major order.
    fn load(&self, index: usize) -> Result<(Vec<f32>, Vec<f32>)>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceSample {
    pub group: usize,
    pub image: Vec<f32>,
    pub mask: Vec<f32>,
}

/// Slices held in memory.
#[derive(Clone, Debug, Default)]
pub struct InMemorySlices {
    pub height: usize,
    pub width: usize,
    pub samples: Vec<SliceSample>,
}

impl InMemorySlices {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, group: usize, image: Vec<f32>, mask: Vec<f32>) -> Result<()> {
        let n = self.height * self.width;
        if image.len() != n || mask.len() != n {
            return Err(Error::contract(format!(
                "slice has {} / {} values, expected {n}",
                image.len(),
                mask.len()
            )));
        }
        self.samples.push(SliceSample { group, image, mask });
        Ok(())
    }
}

impl SliceDataset for InMemorySlices {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn slice_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn group(&self, index: usize) -> usize {
        self.samples[index].group
    }

    fn load(&self, index: usize) -> Result<(Vec<f32>, Vec<f32>)> {
        let s = self
            .samples
            .get(index)
            .ok_or_else(|| Error::OutOfRange(format!("slice {index} of {}", self.samples.len())))?;
        Ok((s.image.clone(), s.mask.clone()))
    }
}

/// Scan-level partition of a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train_groups: Vec<usize>,
    pub val_groups: Vec<usize>,
    pub train_slices: Vec<usize>,
    pub val_slices: Vec<usize>,
}

/// Shuffles the distinct groups with `seed` and holds out
/// `round(val_fraction * groups)` of them (at least one, never all).
pub fn split_by_group(data: &dyn SliceDataset, val_fraction: f64, seed: u64) -> Result<DataSplit> {
    let groups: BTreeSet<usize> = (0..data.len()).map(|i| data.group(i)).collect();
    if groups.len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "a scan-level split needs at least 2 scans, found {}",
            groups.len()
        )));
    }
    let mut groups: Vec<usize> = groups.into_iter().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((val_fraction * groups.len() as f64).round() as usize).clamp(1, groups.len() - 1);
    let mut val_groups = groups[..n_val].to_vec();
    let mut train_groups = groups[n_val..].to_vec();
    val_groups.sort_unstable();
    train_groups.sort_unstable();
    let (mut train_slices, mut val_slices) = (Vec::new(), Vec::new());
    for i in 0..data.len() {
        if val_groups.binary_search(&data.group(i)).is_ok() {
            val_slices.push(i);
        } else {
            train_slices.push(i);
        }
    }
    Ok(DataSplit {
        train_groups,
        val_groups,
        train_slices,
        val_slices,
    })
}

fn load_batch<T: Element>(data: &dyn SliceDataset, indices: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
    let (h, w) = data.slice_shape();
    let mut xs = Vec::with_capacity(indices.len() * h * w);
    let mut ys = Vec::with_capacity(indices.len() * h * w);
    for &i in indices {
        let (img, mask) = data.load(i)?;
        if img.len() != h * w || mask.len() != h * w {
            return Err(Error::contract(format!("slice {i} does not match {h}x{w}")));
        }
        xs.extend(img.iter().map(|&v| T::from_f64(v as f64)));
        ys.extend(mask.iter().map(|&v| T::from_f64(v as f64)));
    }
    let shape = [indices.len(), 1, h, w];
    Ok((Tensor::from_vec(shape, xs)?, Tensor::from_vec(shape, ys)?))
}

/// Loss and accuracy of one mini-batch, measured before the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// One forward/backward pass and Adam update on a batch `[n, 1, h, w]`.
pub fn train_step<T: Element>(
    model: &mut UNetModel<T>,
    state: &mut AdamState<T>,
    images: Tensor<T>,
    masks: Tensor<T>,
    cfg: &TrainingConfig,
) -> Result<StepStats> {
    let (stats, grads) = {
        let mut tape = Tape::new();
        let x = tape.constant(images);
        let y = tape.constant(masks);
        let mut vars = Vec::new();
        let logits = model.record_logits(&mut tape, x, &mut vars)?;
        let probs = ops::sigmoid(tape.value(logits));
        let target = tape.value(y);
        let stats = StepStats {
            loss: bce_loss(probs.data(), target.data())?,
            accuracy: pixel_accuracy(probs.data(), target.data(), 0.5)?,
        };
        let loss = tape.bce_with_logits(logits, y)?;
        let mut g = tape.backward(loss)?;
        let grads: Vec<Option<Tensor<T>>> = vars.iter().map(|&v| g.take(v)).collect();
        (stats, grads)
    };
    for (p, g) in model.params_mut().iter_mut().zip(grads) {
        p.grad = g.unwrap_or_else(|| Tensor::zeros(p.value.shape()));
    }
    adam_step(model.params_mut(), state, cfg)?;
    Ok(stats)
}

/// Mean BCE and pixel accuracy of `model` over `indices`.
pub fn evaluate<T: Element>(
    model: &UNetModel<T>,
    data: &dyn SliceDataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<StepStats> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let (mut loss, mut acc, mut pixels) = (0.0, 0.0, 0usize);
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, y) = load_batch::<T>(data, chunk)?;
        let probs = model.forward(&x)?;
        let n = probs.len();
        loss += bce_loss(probs.data(), y.data())? * n as f64;
        acc += pixel_accuracy(probs.data(), y.data(), 0.5)? * n as f64;
        pixels += n;
    }
    Ok(StepStats {
        loss: loss / pixels as f64,
        accuracy: acc / pixels as f64,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub records: Vec<EpochRecord>,
    pub split: DataSplit,
    pub updates: u64,
    pub stopped_early: bool,
    pub best_epoch: usize,
}

/// Trains `model` until early stopping or `max_epochs`.
///
/// The model keeps the weights from the last completed epoch.
pub fn fit<T: Element>(model: &mut UNetModel<T>, data: &dyn SliceDataset, cfg: &TrainingConfig) -> Result<FitReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("training set has no slices".into()));
    }
    let (h, w) = data.slice_shape();
    model.config().check_spatial(h, w)?;
    let split = split_by_group(data, cfg.val_fraction, cfg.seed)?;
    if cfg.batch_size > split.train_slices.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the {} training slices",
            cfg.batch_size,
            split.train_slices.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut state = AdamState::new(model.params());
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut records = Vec::new();
    let mut order = split.train_slices.clone();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss, mut acc, mut seen) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = load_batch::<T>(data, chunk)?;
            let stats = train_step(model, &mut state, x, y, cfg)?;
            loss += stats.loss * chunk.len() as f64;
            acc += stats.accuracy * chunk.len() as f64;
            seen += chunk.len();
        }
        let val = evaluate(model, data, &split.val_slices, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss / seen as f64,
            train_accuracy: acc / seen as f64,
            val_loss: val.loss,
            val_accuracy: val.accuracy,
            learning_rate: effective_lr(state.t, cfg),
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train_loss {:.6} train_acc {:.4} val_loss {:.6} val_acc {:.4}",
            record.train_loss,
            record.train_accuracy,
            record.val_loss,
            record.val_accuracy
        );
        records.push(record);
        if stopper.update(val.loss) == Decision::Stop {
            stopped_early = true;
            break;
        }
    }

    Ok(FitReport {
        records,
        split,
        updates: state.t,
        stopped_early,
        best_epoch: stopper.best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unet::{build_unet, ArchitectureKind, UNetConfig};

    fn toy_data(groups: usize, per_group: usize) -> InMemorySlices {
        let mut d = InMemorySlices::new(8, 8);
        for g in 0..groups {
            for k in 0..per_group {
                let image: Vec<f32> = (0..64).map(|i| ((i * 7 + g * 3 + k) % 11) as f32 / 11.0).collect();
                let mask: Vec<f32> = image.iter().map(|&v| (v > 0.5) as u8 as f32).collect();
                d.push(g, image, mask).unwrap();
            }
        }
        d
    }

    #[test]
    fn split_keeps_groups_together() {
        let d = toy_data(10, 3);
        let s = split_by_group(&d, 0.1, 5).unwrap();
        assert_eq!(s.val_groups.len(), 1);
        assert_eq!(s.train_groups.len(), 9);
        assert_eq!(s.val_slices.len(), 3);
        for &i in &s.val_slices {
            assert!(s.val_groups.contains(&d.group(i)));
        }
        assert_eq!(s, split_by_group(&d, 0.1, 5).unwrap());
        assert!(split_by_group(&toy_data(1, 4), 0.1, 0).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let d = toy_data(4, 2);
        let cfg = TrainingConfig {
            batch_size: 2,
            max_epochs: 2,
            learning_rate: 1e-3,
            seed: 9,
            ..TrainingConfig::default()
        };
        let run = || {
            let mut m: UNetModel<f32> =
                build_unet(ArchitectureKind::Residual, &UNetConfig::with_width(2, 1), 3).unwrap();
            let report = fit(&mut m, &d, &cfg).unwrap();
            (m.params().to_vec(), report)
        };
        let (pa, ra) = run();
        let (pb, rb) = run();
        assert_eq!(pa, pb);
        assert_eq!(ra.records.len(), rb.records.len());
        for (a, b) in ra.records.iter().zip(&rb.records) {
            assert_eq!(a.train_loss, b.train_loss);
            assert_eq!(a.val_loss, b.val_loss);
        }
        assert_eq!(ra.updates, 6);
    }

    #[test]
    fn oversized_batch_is_a_config_error() {
        let d = toy_data(3, 1);
        let mut m: UNetModel<f32> = build_unet(ArchitectureKind::Vanilla, &UNetConfig::with_width(2, 1), 0).unwrap();
        let cfg = TrainingConfig {
            batch_size: 32,
            ..TrainingConfig::default()
        };
        assert!(matches!(fit(&mut m, &d, &cfg), Err(Error::Config(_))));
    }
}
