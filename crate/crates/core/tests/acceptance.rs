//! Acceptance suite. Prints one PASS/FAIL line per criterion; run with
//! `cargo test -p skullnet-core --release --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use half::f16;
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skullnet::augment::{znorm, Region};
use skullnet::gradcheck::{check_primitive, check_unet, PRIMITIVES};
use skullnet::ops::conv2d;
use skullnet::phantom::phantom_slice;
use skullnet::pipeline::{
    cmd_augment, cmd_count_params, cmd_phantom, cmd_predict, cmd_train, AugmentedTree, RunConfig, VolumeFormat,
    CHECKPOINT_FILE, CURVES_FILE,
};
use skullnet::train::{adam_step, effective_lr, train_step, AdamState, Decision, EarlyStopper, StepStats};
use skullnet::unet::save_checkpoint;
use skullnet::volume_io::{
    quantize_scan, read_npy, read_volume, write_npy, write_volume_npy, Dtype, NpyRecord, Volume3D, VoxelData,
};
use skullnet::{
    build_unet, ArchitectureKind, Error, Parameter, SliceDataset, Tensor, TrainingConfig, UNetConfig, UNetModel,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

// 1. Published parameter counts, exact, in under a second.
fn parameter_counts() -> Outcome {
    let start = Instant::now();
    let cfg = UNetConfig::default();
    let v: UNetModel<f32> = build_unet(ArchitectureKind::Vanilla, &cfg, 0).unwrap();
    let r: UNetModel<f32> = build_unet(ArchitectureKind::Residual, &cfg, 0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (vc, rc) = (v.runtime_parameter_count(), r.runtime_parameter_count());
    outcome(
        vc == 7_759_521 && rc == 9_895_073 && secs < 1.0,
        format!("vanilla={vc} residual={rc} build={secs:.3}s"),
    )
}

// 2. Dense analytic == runtime == 14,327,681; report prints the published figure and delta.
fn dense_audit() -> Outcome {
    let rows = cmd_count_params(&[ArchitectureKind::Dense], &UNetConfig::default()).unwrap();
    let row = &rows[0];
    let line = row.to_string();
    let pass = row.analytic == 14_327_681
        && row.runtime == 14_327_681
        && line.contains("15479681")
        && line.contains("delta=-1152000");
    outcome(pass, line)
}

// 3. Primitive and toy U-Net gradients vs central differences, 20 seeds, < 1e-4, < 2 min.
fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut checks = 0;
    for seed in 0..20 {
        for name in PRIMITIVES {
            let r = check_primitive(name, seed).unwrap();
            worst = worst.max(r.max_rel_err);
            checks += 1;
            if r.max_rel_err.is_nan() || r.max_rel_err >= 1e-4 {
                failures.push(format!("{name}@{seed}"));
            }
        }
        for kind in ArchitectureKind::ALL {
            let r = check_unet(kind, seed).unwrap();
            worst = worst.max(r.max_rel_err);
            checks += 1;
            if r.max_rel_err.is_nan() || r.max_rel_err >= 1e-4 {
                failures.push(format!("unet_{}@{seed}", kind.name()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs < 120.0,
        format!("{checks} checks, worst rel err {worst:.2e}, {secs:.1}s, failures {failures:?}"),
    )
}

fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let [n, cin, h, wd] = x.shape().dims();
    let [cout, _, k, _] = w.shape().dims();
    let pad = (k / 2) as isize;
    Tensor::from_fn([n, cout, h, wd], |[ni, co, y, xo]| {
        let mut acc = b.get([co, 0, 0, 0]);
        for ci in 0..cin {
            for ky in 0..k {
                for kx in 0..k {
                    let sy = y as isize + ky as isize - pad;
                    let sx = xo as isize + kx as isize - pad;
                    if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < wd {
                        acc += x.get([ni, ci, sy as usize, sx as usize]) * w.get([co, ci, ky, kx]);
                    }
                }
            }
        }
        acc
    })
}

// 4. Optimized conv2d equals the nested-loop oracle exactly on 100 cases up to 2x4x8x8.
fn conv_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dyadic = |rng: &mut ChaCha8Rng, shape: [usize; 4]| {
        Tensor::from_fn(shape, |_| rng.random_range(-32i32..=32) as f64 / 16.0)
    };
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=2);
        let cin = rng.random_range(1..=4);
        let cout = rng.random_range(1..=4);
        let (h, w) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let k = if rng.random_bool(0.5) { 3 } else { 1 };
        let x = dyadic(&mut rng, [n, cin, h, w]);
        let wt = dyadic(&mut rng, [cout, cin, k, k]);
        let b = dyadic(&mut rng, [cout, 1, 1, 1]);
        if conv2d(&x, &wt, &b).unwrap().data() != conv_oracle(&x, &wt, &b).data() {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("100 cases, {mismatches} mismatches"))
}

fn phantom_batch(count: usize, size: usize) -> (Tensor<f32>, Tensor<f32>) {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..count {
        let (scan, mask) = phantom_slice(size, size, i as u64);
        let vol = Volume3D::from_f64([1, size, size], scan).unwrap();
        let (normed, _) = znorm(&vol, Region::Nonzero).unwrap();
        xs.extend(normed.to_f64_vec().iter().map(|&v| v as f32));
        ys.extend(mask.iter().map(|&v| v as f32));
    }
    (
        Tensor::from_vec([count, 1, size, size], xs).unwrap(),
        Tensor::from_vec([count, 1, size, size], ys).unwrap(),
    )
}

fn evaluate_batch(model: &UNetModel<f32>, x: &Tensor<f32>, y: &Tensor<f32>) -> StepStats {
    let p = model.forward(x).unwrap();
    StepStats {
        loss: skullnet::train::bce_loss(p.data(), y.data()).unwrap(),
        accuracy: skullnet::train::pixel_accuracy(p.data(), y.data(), 0.5).unwrap(),
    }
}

// 5. Base-8 models overfit 8 phantom slices: accuracy >= 0.99 and BCE <= 0.05 within 500 updates.
fn overfit() -> Outcome {
    let (x, y) = phantom_batch(8, 64);
    let cfg = UNetConfig {
        height: 64,
        width: 64,
        ..UNetConfig::with_width(8, 4)
    };
    let tc = TrainingConfig {
        learning_rate: 1e-3,
        ..TrainingConfig::default()
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in ArchitectureKind::ALL {
        let start = Instant::now();
        let mut model: UNetModel<f32> = build_unet(kind, &cfg, 0).unwrap();
        let mut state = AdamState::new(model.params());
        let mut reached = None;
        let mut last = StepStats {
            loss: f64::NAN,
            accuracy: 0.0,
        };
        for update in 1..=500 {
            let s = train_step(&mut model, &mut state, x.clone(), y.clone(), &tc).unwrap();
            if s.accuracy >= 0.99 && s.loss <= 0.05 {
                last = evaluate_batch(&model, &x, &y);
                if last.accuracy >= 0.99 && last.loss <= 0.05 {
                    reached = Some(update);
                    break;
                }
            }
        }
        let secs = start.elapsed().as_secs_f64();
        if reached.is_none() {
            last = evaluate_batch(&model, &x, &y);
        }
        let ok = reached.is_some() && secs < 600.0;
        pass &= ok;
        parts.push(format!(
            "{} updates={} acc={:.4} bce={:.4} {:.1}s",
            kind.name(),
            reached.map_or("none".to_string(), |u| u.to_string()),
            last.accuracy,
            last.loss,
            secs
        ));
    }
    outcome(pass, parts.join("; "))
}

// 6. znorm region mean and std after normalization; constant volume is rejected.
fn znorm_postconditions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_mu = 0.0f64;
    let mut worst_sigma = 0.0f64;
    for trial in 0..50 {
        let dims = [rng.random_range(1..6), rng.random_range(2..20), rng.random_range(2..20)];
        let n = dims.iter().product::<usize>();
        let scale = 10f64.powi(rng.random_range(-3..4));
        let offset = rng.random_range(-1e3..1e3);
        let mask: Vec<f64> = (0..n)
            .map(|i| if i < 2 || rng.random_bool(0.6) { 1.0 } else { 0.0 })
            .collect();
        let data: Vec<f64> = (0..n)
            .map(|i| {
                let v = scale * rng.random_range(-1.0..1.0);
                match (trial % 2, mask[i]) {
                    (0, _) => offset + v,
                    (_, 1.0) => offset.abs() + 2.0 * scale + v,
                    _ => 0.0,
                }
            })
            .collect();
        let vol = Volume3D::from_f64(dims, data).unwrap();
        let m = Volume3D::from_f64(dims, mask.clone()).unwrap();
        let (out, _) = if trial % 2 == 0 {
            znorm(&vol, Region::Mask(&m)).unwrap()
        } else {
            znorm(&vol, Region::Nonzero).unwrap()
        };
        let orig = vol.to_f64_vec();
        let z: Vec<f64> = out
            .to_f64_vec()
            .into_iter()
            .enumerate()
            .filter(|&(i, _)| if trial % 2 == 0 { mask[i] >= 0.5 } else { orig[i] > 0.0 })
            .map(|(_, v)| v)
            .collect();
        let mu = z.iter().sum::<f64>() / z.len() as f64;
        let sd = (z.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
        worst_mu = worst_mu.max(mu.abs());
        worst_sigma = worst_sigma.max((sd - 1.0).abs());
    }
    let constant = Volume3D::from_f64([2, 3, 3], vec![7.0; 18]).unwrap();
    let rejected = matches!(znorm(&constant, Region::Nonzero), Err(Error::ZeroStd { .. }));
    outcome(
        worst_mu < 1e-6 && worst_sigma < 1e-6 && rejected,
        format!("max|mu|={worst_mu:.1e} max|sigma-1|={worst_sigma:.1e} constant->ZeroStd={rejected}"),
    )
}

// 7. Single Adam step and decayed learning rate.
fn adam_oracle() -> Outcome {
    let cfg = TrainingConfig {
        learning_rate: 1e-5,
        decay: 0.0,
        ..TrainingConfig::default()
    };
    let mut params = vec![Parameter::new("theta", Tensor::scalar(1.0f64))];
    params[0].grad = Tensor::scalar(1.0);
    let mut state = AdamState::new(&params);
    adam_step(&mut params, &mut state, &cfg).unwrap();
    let theta = params[0].value.data()[0];
    let step_err = (theta - 0.99999000).abs();

    let lr1 = effective_lr(1, &TrainingConfig::default());
    let want = 1e-5 / (1.0 + 1.99e-7);
    let lr_rel = ((lr1 - want) / want).abs();
    outcome(
        step_err <= 1e-12 && lr_rel <= 1e-15,
        format!("theta={theta:.14} |err|={step_err:.1e} effective_lr(1)={lr1:.10e} rel={lr_rel:.1e}"),
    )
}

// 8. Early stopping traces.
fn early_stopping() -> Outcome {
    let mut es = EarlyStopper::new(2);
    let mut stop_epoch = None;
    for (i, &l) in [0.5, 0.4, 0.41, 0.42].iter().enumerate() {
        if es.update(l) == Decision::Stop {
            stop_epoch = Some(i + 1);
            break;
        }
    }
    let max_epochs = TrainingConfig::default().max_epochs;
    let mut es = EarlyStopper::new(2);
    let never = (0..max_epochs).all(|i| es.update(1.0 / (i + 1) as f64) == Decision::Continue);
    outcome(
        stop_epoch == Some(4) && never,
        format!("trace stops after epoch {stop_epoch:?}; decreasing run over {max_epochs} epochs never stops: {never}"),
    )
}

fn golden_values(dtype: Dtype) -> Vec<f64> {
    (0..24)
        .map(|i| {
            let i = i as f64;
            match dtype {
                Dtype::F64 => i * 0.5 - 3.25,
                Dtype::F32 => i * 0.25 - 1.5,
                Dtype::F16 => i * 0.125 - 1.0,
                Dtype::I16 => i * 300.0 - 3000.0,
                Dtype::I8 => i * 5.0 - 60.0,
                Dtype::U8 => i * 10.0,
            }
        })
        .collect()
}

fn golden_record(dtype: Dtype) -> NpyRecord {
    let v = golden_values(dtype);
    let s = [2, 3, 4];
    match dtype {
        Dtype::F64 => NpyRecord::from_slice(&s, &v),
        Dtype::F32 => NpyRecord::from_slice(&s, &v.iter().map(|&x| x as f32).collect::<Vec<_>>()),
        Dtype::F16 => NpyRecord::from_slice(&s, &v.iter().map(|&x| f16::from_f64(x)).collect::<Vec<_>>()),
        Dtype::I16 => NpyRecord::from_slice(&s, &v.iter().map(|&x| x as i16).collect::<Vec<_>>()),
        Dtype::I8 => NpyRecord::from_slice(&s, &v.iter().map(|&x| x as i8).collect::<Vec<_>>()),
        Dtype::U8 => NpyRecord::from_slice(&s, &v.iter().map(|&x| x as u8).collect::<Vec<_>>()),
    }
    .unwrap()
}

// 9. NPY round trip (property), golden NPY bytes, NIfTI voxels, f16(1.0).
fn format_fidelity() -> Outcome {
    let strategy = (
        prop::sample::select(Dtype::ALL.to_vec()),
        prop::collection::vec(0usize..6, 0..4),
    )
        .prop_flat_map(|(dtype, shape)| {
            let n: usize = shape.iter().product();
            (
                Just(dtype),
                Just(shape),
                prop::collection::vec(any::<u8>(), n * dtype.size()),
            )
        });
    let cases = 1000;
    let mut runner = TestRunner::new(RunnerConfig {
        cases,
        failure_persistence: None,
        ..RunnerConfig::default()
    });
    let round_trip = runner
        .run(&strategy, |(dtype, shape, data)| {
            let rec = NpyRecord {
                dtype,
                fortran_order: false,
                shape,
                data,
            };
            let back = read_npy(&write_npy(&rec).unwrap()).unwrap();
            prop_assert_eq!(back, rec);
            Ok(())
        })
        .is_ok();

    let golden_names = [
        (Dtype::F64, "golden_f64.npy"),
        (Dtype::F32, "golden_f32.npy"),
        (Dtype::F16, "golden_f16.npy"),
        (Dtype::I16, "golden_i16.npy"),
        (Dtype::I8, "golden_i8.npy"),
        (Dtype::U8, "golden_u8.npy"),
    ];
    let golden_diffs = golden_names
        .iter()
        .filter(|(d, name)| write_npy(&golden_record(*d)).unwrap() != std::fs::read(fixture(name)).unwrap())
        .count();

    let scaled = read_volume(fixture("scaled_i16_le.nii")).unwrap();
    let plain = read_volume(fixture("plain_f32_be.nii")).unwrap();
    let pair = read_volume(fixture("pair_u8.hdr")).unwrap();
    let nifti_ok = scaled.dims() == [2, 3, 4]
        && scaled.get(0, 0, 0) == 1.0
        && scaled.get(1, 2, 3) == 247.0
        && scaled.get(0, 1, 2) == 25.0
        && plain.get(0, 1, 2) == 3.0
        && plain.get(1, 2, 3) == 30.75
        && pair.get(1, 2, 3) == 123.0
        && pair.get(1, 1, 0) == 110.0;

    let q = quantize_scan(&Volume3D::from_f64([1, 1, 1], vec![1.0]).unwrap()).unwrap();
    let one_bits = match q.data() {
        VoxelData::F16(h) => h[0].to_bits(),
        _ => 0,
    };
    outcome(
        round_trip && golden_diffs == 0 && nifti_ok && one_bits == 0x3C00,
        format!(
            "npy round trip over {cases} arrays: {round_trip}; golden diffs: {golden_diffs}; \
             nifti voxels: {nifti_ok}; f16(1.0)=0x{one_bits:04X}"
        ),
    )
}

fn write_stub_scans(dir: &Path, count: usize, dims: [usize; 3]) -> (Vec<PathBuf>, Vec<PathBuf>) {
    let n = dims.iter().product::<usize>();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut scans, mut masks) = (Vec::new(), Vec::new());
    for i in 0..count {
        let scan: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
        let s = dir.join(format!("stub_{i:03}.npy"));
        let m = dir.join(format!("stub_{i:03}_mask.npy"));
        write_volume_npy(&s, &Volume3D::from_f64(dims, scan).unwrap()).unwrap();
        write_volume_npy(&m, &Volume3D::from_f64(dims, vec![1.0; n]).unwrap()).unwrap();
        scans.push(s);
        masks.push(m);
    }
    (scans, masks)
}

// 10. 110 scans x factor 5 = 550 volumes; 550 x 192 = 105,600 slices.
fn dataset_arithmetic() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (scans, masks) = write_stub_scans(dir.path(), 110, [192, 2, 2]);
    let mut cfg = RunConfig::default();
    cfg.data.scans = scans;
    cfg.data.masks = masks;
    cfg.data.factor = 5;
    cfg.out = dir.path().join("aug");
    let summary = cmd_augment(&cfg).unwrap();
    let tree = AugmentedTree::open(&cfg.out, 64).unwrap();
    let pass = summary.copies == 550
        && summary.slices == 105_600
        && tree.volume_count() == 550
        && tree.len() == 105_600
        && tree.scan_ids().len() == 110;
    outcome(
        pass,
        format!(
            "augment wrote {} volumes / {} slices; tree holds {} volumes / {} slices over {} scans",
            summary.copies,
            summary.slices,
            tree.volume_count(),
            tree.len(),
            tree.scan_ids().len()
        ),
    )
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn small_run_config(dir: &Path, arch: ArchitectureKind) -> RunConfig {
    let mut cfg = RunConfig {
        arch,
        seed: 3,
        ..RunConfig::default()
    };
    cfg.model = UNetConfig {
        height: 32,
        width: 32,
        ..UNetConfig::with_width(4, 3)
    };
    cfg.train.learning_rate = 1e-3;
    cfg.train.batch_size = 4;
    cfg.train.max_epochs = 2;
    cfg.data.factor = 2;
    cfg.data.augmented = Some(dir.join("aug_a"));
    cfg
}

// 11. Identical config and seed give bit-identical augmented trees, curves and checkpoints.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let pairs = cmd_phantom(&dir.path().join("ph"), 3, [8, 32, 32], 1, VolumeFormat::Npy).unwrap();
    let mut cfg = small_run_config(dir.path(), ArchitectureKind::Residual);
    cfg.data.scans = pairs.iter().map(|p| p.0.clone()).collect();
    cfg.data.masks = pairs.iter().map(|p| p.1.clone()).collect();
    let mut trees = Vec::new();
    for name in ["aug_a", "aug_b"] {
        cfg.out = dir.path().join(name);
        cmd_augment(&cfg).unwrap();
        trees.push(tree_bytes(&cfg.out));
    }
    let trees_equal = trees[0] == trees[1] && !trees[0].is_empty();

    let mut train_equal = true;
    let mut parts = Vec::new();
    for arch in ArchitectureKind::ALL {
        let mut runs = Vec::new();
        for run in 0..2 {
            let mut c = small_run_config(dir.path(), arch);
            c.out = dir.path().join(format!("train_{}_{run}", arch.name()));
            cmd_train(&c).unwrap();
            runs.push((
                std::fs::read(c.out.join(CURVES_FILE)).unwrap(),
                std::fs::read(c.out.join(CHECKPOINT_FILE)).unwrap(),
            ));
        }
        let same = runs[0] == runs[1];
        train_equal &= same;
        parts.push(format!("{}={same}", arch.name()));
    }
    outcome(
        trees_equal && train_equal,
        format!(
            "augment trees identical ({} files): {trees_equal}; train curves+checkpoint identical: {}",
            trees[0].len(),
            parts.join(" ")
        ),
    )
}

// 12. stripped == mask * input and mask == (prob >= 0.5) on every fixture.
fn skull_strip_identity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut inputs = Vec::new();
    for (format, sub) in [(VolumeFormat::Nii, "nii"), (VolumeFormat::Npy, "npy")] {
        for (scan, _) in cmd_phantom(&dir.path().join(sub), 3, [8, 32, 32], 20, format).unwrap() {
            inputs.push(scan);
        }
    }
    let model_cfg = UNetConfig {
        height: 32,
        width: 32,
        ..UNetConfig::with_width(4, 3)
    };
    let mut checked = 0;
    let mut violations = 0;
    let mut positive = 0usize;
    let mut voxels = 0usize;
    for arch in ArchitectureKind::ALL {
        let model: UNetModel<f32> = build_unet(arch, &model_cfg, 12).unwrap();
        let ckpt = dir.path().join(format!("{}.ckpt", arch.name()));
        save_checkpoint(&model, &ckpt).unwrap();
        for (i, input) in inputs.iter().enumerate() {
            let mut cfg = RunConfig::default();
            cfg.predict.checkpoint = Some(ckpt.clone());
            cfg.predict.input = Some(input.clone());
            cfg.out = dir.path().join(format!("pred_{}_{i}", arch.name()));
            cmd_predict(&cfg).unwrap();

            let load = |name: &str| read_volume(cfg.out.join(name)).unwrap().to_f64_vec();
            let (prob, mask) = (load("prob.npy"), load("mask.npy"));
            let (stripped, stripped_raw) = (load("stripped.npy"), load("stripped_raw.npy"));
            let raw = read_volume(input).unwrap();
            let normed = znorm(&raw, Region::Nonzero).unwrap().0.to_f64_vec();
            let raw = raw.to_f64_vec();
            for j in 0..prob.len() {
                let m = if prob[j] >= 0.5 { 1.0 } else { 0.0 };
                if mask[j] != m
                    || stripped[j].to_bits() != (mask[j] * normed[j]).to_bits()
                        && !(mask[j] == 0.0 && stripped[j] == 0.0)
                    || stripped_raw[j] != mask[j] * raw[j]
                {
                    violations += 1;
                }
            }
            positive += mask.iter().filter(|&&v| v == 1.0).count();
            voxels += mask.len();
            checked += 1;
        }
    }
    outcome(
        violations == 0 && checked == 18,
        format!(
            "{checked} predictions, {violations} violating voxels, mask fill {:.3}",
            positive as f64 / voxels as f64
        ),
    )
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 12] = [
        ("parameter counts", parameter_counts),
        ("dense wiring audit", dense_audit),
        ("gradient correctness", gradients),
        ("brute-force conv equivalence", conv_equivalence),
        ("overfit sanity", overfit),
        ("znorm post-conditions", znorm_postconditions),
        ("adam oracle", adam_oracle),
        ("early stopping trace", early_stopping),
        ("format fidelity", format_fidelity),
        ("dataset arithmetic", dataset_arithmetic),
        ("determinism", determinism),
        ("skull-strip identity", skull_strip_identity),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {n:>2} {:<4} {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
        if !result.pass {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
