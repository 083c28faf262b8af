use crate::error::{Error, Result};
use crate::tensor::num_like::Element;
use crate::tensor::Tensor;
use crate::unet::Parameter;

use super::TrainingConfig;

/// Inverse-time decayed learning rate after `t` updates:
/// `learning_rate / (1 + decay * t)`.
pub fn effective_lr(t: u64, cfg: &TrainingConfig) -> f64 {
    cfg.learning_rate / (1.0 + cfg.decay * t as f64)
}

/// First/second moment estimates for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    /// Updates applied so far.
    pub t: u64,
}

impl<T: Element> AdamState<T> {
    pub fn new(params: &[Parameter<T>]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            t: 0,
        }
    }
}

/// Applies one Adam update using each parameter's `grad`.
///
/// The step uses the learning rate decayed by the number of updates applied
/// before it, so the first update runs at the undecayed rate. Nothing is
/// modified if any gradient is non-finite.
pub fn adam_step<T: Element>(
    params: &mut [Parameter<T>],
    state: &mut AdamState<T>,
    cfg: &TrainingConfig,
) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::contract(format!(
            "adam state tracks {} tensors, got {}",
            state.m.len(),
            params.len()
        )));
    }
    if let Some(bad) = params.iter().find(|p| p.trainable && !p.grad.all_finite()) {
        return Err(Error::NonFiniteGradient {
            param: bad.name.clone(),
        });
    }

    let lr = effective_lr(state.t, cfg);
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);

    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        if !p.trainable {
            continue;
        }
        for (((theta, &g), m), v) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(p.grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let g = g.to_f64();
            let m_new = b1 * m.to_f64() + (1.0 - b1) * g;
            let v_new = b2 * v.to_f64() + (1.0 - b2) * g * g;
            *m = T::from_f64(m_new);
            *v = T::from_f64(v_new);
            let m_hat = m_new / c1;
            let v_hat = v_new / c2;
            *theta = T::from_f64(theta.to_f64() - lr * m_hat / (v_hat.sqrt() + eps));
        }
    }
    Ok(())
}
