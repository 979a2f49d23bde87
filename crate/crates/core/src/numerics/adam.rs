use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Trainable value with its accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub value: Matrix,
    pub grad: Matrix,
}

impl ParamTensor {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        ParamTensor { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn accumulate(&mut self, g: &Matrix) -> Result<()> {
        self.grad.add_assign(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter, plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a ParamTensor>) -> Self {
        let first: Vec<Matrix> = params
            .into_iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        AdamState {
            second: first.clone(),
            first,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update over `params`, in place.
pub fn adam_step(params: &mut [&mut ParamTensor], state: &mut AdamState, lr: f64, cfg: AdamConfig) -> Result<()> {
    if params.len() != state.first.len() {
        return Err(Error::shape("adam_step", (params.len(), 1), (state.first.len(), 1)));
    }
    for (p, m) in params.iter().zip(&state.first) {
        if p.value.shape() != m.shape() || p.grad.shape() != m.shape() {
            return Err(Error::shape("adam_step", p.value.shape(), m.shape()));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        let grads = p.grad.as_slice().to_vec();
        let values = p.value.as_mut_slice();
        for (((w, g), m), v) in values
            .iter_mut()
            .zip(&grads)
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
        }
    }
    Ok(())
}
