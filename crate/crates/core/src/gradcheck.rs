//! Central finite-difference checking of tape gradients in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::unet::{build_unet, ArchitectureKind, UNetConfig, UNetModel};

#[derive(Clone, Copy, Debug)]
pub struct GradcheckConfig {
    pub seed: u64,
    /// Finite-difference step.
    pub step: f64,
    pub tol: f64,
    /// Number of randomly sampled coordinates across all inputs.
    pub samples: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            step: 1e-3,
            tol: 1e-4,
            samples: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    pub pass: bool,
    pub checked: usize,
}

/// `|a - n| / max(1, |a|, |n|)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares the tape gradient of `f` against central differences.
///
/// `f` receives the tape and one differentiable leaf per input and must
/// return a scalar. Coordinates are sampled uniformly (with replacement)
/// over every element of every input.
pub fn gradcheck<F>(inputs: &[Tensor<f64>], f: F, cfg: &GradcheckConfig) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
{
    if cfg.samples == 0 {
        return Err(Error::contract("gradcheck: zero coordinates requested"));
    }
    if inputs.is_empty() {
        return Err(Error::contract("gradcheck: no inputs"));
    }

    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        let v = tape.value(loss);
        if !v.is_scalar() {
            return Err(Error::contract("gradcheck: function must return a scalar"));
        }
        Ok(v.data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let total: usize = inputs.iter().map(Tensor::len).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut perturbed = inputs.to_vec();
    let mut max_rel_err = 0f64;
    for _ in 0..cfg.samples {
        let mut flat = rng.random_range(0..total);
        let mut which = 0;
        while flat >= inputs[which].len() {
            flat -= inputs[which].len();
            which += 1;
        }
        let orig = inputs[which].data()[flat];
        perturbed[which].data_mut()[flat] = orig + cfg.step;
        let plus = eval(&perturbed)?;
        perturbed[which].data_mut()[flat] = orig - cfg.step;
        let minus = eval(&perturbed)?;
        perturbed[which].data_mut()[flat] = orig;

        let numeric = (plus - minus) / (2.0 * cfg.step);
        let err = rel_err(analytic[which].data()[flat], numeric);
        if !err.is_finite() {
            max_rel_err = f64::INFINITY;
        } else {
            max_rel_err = max_rel_err.max(err);
        }
    }
    Ok(GradcheckReport {
        max_rel_err,
        pass: max_rel_err < cfg.tol,
        checked: cfg.samples,
    })
}

/// `sum(out * probe)` for a fixed random probe, turning a tensor-valued
/// primitive into a scalar with a non-trivial upstream gradient.
pub fn probe_sum(tape: &mut Tape<'_, f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(out).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let probe = Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0));
    let p = tape.constant(probe);
    let prod = tape.mul(out, p)?;
    Ok(tape.sum(prod))
}

/// Finite-difference step for whole-network checks.
pub const UNET_STEP: f64 = 1e-6;

/// Names accepted by [`check_primitive`].
pub const PRIMITIVES: [&str; 8] = [
    "conv2d",
    "conv2d_transpose",
    "maxpool2",
    "concat",
    "relu",
    "sigmoid",
    "bce",
    "bce_with_logits",
];

fn uniform(rng: &mut ChaCha8Rng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Values at least `0.1` away from zero, so `x +- step` never crosses the
/// ReLU kink.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Distinct values spaced `0.01` apart in random order, so no pooling
/// window holds two values within `2 * step` of each other.
fn distinct(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - n as f64 * 0.005).collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    Tensor::from_vec(shape, vals).expect("length matches shape")
}

/// Gradient check of one primitive on random inputs drawn from `seed`.
pub fn check_primitive(name: &str, seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = GradcheckConfig {
        seed,
        ..Default::default()
    };
    match name {
        "conv2d" => {
            let x = uniform(&mut rng, [2, 3, 6, 6], -1.0, 1.0);
            let w = uniform(&mut rng, [2, 3, 3, 3], -1.0, 1.0);
            let b = uniform(&mut rng, [2, 1, 1, 1], -1.0, 1.0);
            gradcheck(
                &[x, w, b],
                |t, v| {
                    let y = t.conv2d(v[0], v[1], v[2])?;
                    probe_sum(t, y, seed)
                },
                &cfg,
            )
        }
        "conv2d_transpose" => {
            let x = uniform(&mut rng, [2, 3, 3, 4], -1.0, 1.0);
            let w = uniform(&mut rng, [3, 2, 2, 2], -1.0, 1.0);
            let b = uniform(&mut rng, [2, 1, 1, 1], -1.0, 1.0);
            gradcheck(
                &[x, w, b],
                |t, v| {
                    let y = t.conv2d_transpose(v[0], v[1], v[2])?;
                    probe_sum(t, y, seed)
                },
                &cfg,
            )
        }
        "maxpool2" => {
            let x = distinct(&mut rng, [2, 2, 6, 8]);
            gradcheck(
                &[x],
                |t, v| {
                    let y = t.maxpool2(v[0])?;
                    probe_sum(t, y, seed)
                },
                &cfg,
            )
        }
        "concat" => {
            let a = uniform(&mut rng, [2, 1, 3, 3], -1.0, 1.0);
            let b = uniform(&mut rng, [2, 3, 3, 3], -1.0, 1.0);
            gradcheck(
                &[a, b],
                |t, v| {
                    let y = t.concat(&[v[0], v[1]])?;
                    probe_sum(t, y, seed)
                },
                &cfg,
            )
        }
        "relu" => {
            let x = away_from_zero(&mut rng, [2, 2, 4, 4]);
            gradcheck(
                &[x],
                |t, v| {
                    let y = t.relu(v[0]);
                    probe_sum(t, y, seed)
                },
                &cfg,
            )
        }
        "sigmoid" => {
            let x = uniform(&mut rng, [2, 2, 4, 4], -4.0, 4.0);
            gradcheck(
                &[x],
                |t, v| {
                    let y = t.sigmoid(v[0]);
                    probe_sum(t, y, seed)
                },
                &cfg,
            )
        }
        "bce" => {
            let p = uniform(&mut rng, [2, 1, 4, 4], 0.1, 0.9);
            let y = Tensor::from_fn([2, 1, 4, 4], |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
            gradcheck(
                &[p],
                |t, v| {
                    let target = t.constant(y.clone());
                    t.bce(v[0], target)
                },
                &cfg,
            )
        }
        "bce_with_logits" => {
            let z = uniform(&mut rng, [2, 1, 4, 4], -4.0, 4.0);
            let y = Tensor::from_fn([2, 1, 4, 4], |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
            gradcheck(
                &[z],
                |t, v| {
                    let target = t.constant(y.clone());
                    t.bce_with_logits(v[0], target)
                },
                &cfg,
            )
        }
        other => Err(Error::Config(format!("unknown primitive `{other}`"))),
    }
}

/// Gradient check of a depth-2 toy U-Net on a `1x1x16x16` input, through
/// the fused logits loss, with respect to the input and every parameter.
///
/// Uses [`UNET_STEP`]: with hundreds of ReLUs and pooling windows in the
/// graph, a `1e-3` perturbation regularly crosses a kink or flips a max,
/// which measures the function's non-smoothness rather than the gradient.
pub fn check_unet(kind: ArchitectureKind, seed: u64) -> Result<GradcheckReport> {
    let config = UNetConfig {
        height: 16,
        width: 16,
        ..UNetConfig::with_width(2, 2)
    };
    let model: UNetModel<f64> = build_unet(kind, &config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, [1, 1, 16, 16], -1.0, 1.0);
    let y = Tensor::from_fn([1, 1, 16, 16], |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
    let mut inputs = vec![x];
    inputs.extend(model.params().iter().map(|p| p.value.clone()));
    let cfg = GradcheckConfig {
        seed,
        step: UNET_STEP,
        ..Default::default()
    };
    let graph = model.graph();
    gradcheck(
        &inputs,
        |t, v| {
            let logits = graph.record(t, v[0], &v[1..])?;
            let target = t.constant(y.clone());
            t.bce_with_logits(logits, target)
        },
        &cfg,
    )
}
