//! Adam parameter updates.

use super::Tensor;
use crate::error::{Error, Result};

/// First/second moment state for one parameter tensor.
///
/// Defaults are `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`; both moments
/// start at zero and `step` counts completed updates.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Tensor,
    pub v: Tensor,
}

impl AdamState {
    pub fn new(lr: f64, shape: &[usize]) -> AdamState {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
        }
    }
}

/// One bias-corrected Adam update; returns the new parameter tensor and
/// advances the moment estimates in `state`.
pub fn adam_step(param: &Tensor, grad: &Tensor, state: &mut AdamState) -> Result<Tensor> {
    if param.shape() != grad.shape() || param.shape() != state.m.shape() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "param {:?}, grad {:?}, state {:?}",
                param.shape(),
                grad.shape(),
                state.m.shape()
            ),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let n = param.len();
    let mut m = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let g = grad.data()[i];
        let mi = state.beta1 * state.m.data()[i] + (1.0 - state.beta1) * g;
        let vi = state.beta2 * state.v.data()[i] + (1.0 - state.beta2) * g * g;
        let m_hat = mi / bc1;
        let v_hat = vi / bc2;
        out.push(param.data()[i] - state.lr * m_hat / (v_hat.sqrt() + state.eps));
        m.push(mi);
        v.push(vi);
    }
    state.m = Tensor::new(param.shape().to_vec(), m)?;
    state.v = Tensor::new(param.shape().to_vec(), v)?;
    Tensor::new(param.shape().to_vec(), out)
}
