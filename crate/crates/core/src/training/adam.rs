//! Adam optimizer and gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    /// Number of updates applied so far.
    pub step: u64,
    pub first_moment: ModelParams,
    pub second_moment: ModelParams,
}

impl OptimizerState {
    pub fn new(model: &ModelConfig, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moment: ModelParams::zeros(model),
            second_moment: ModelParams::zeros(model),
        }
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut OptimizerState) -> Result<()> {
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    for name in &names {
        let dims = params.get(name)?.dims().to_vec();
        for t in [grads.get(name)?, state.first_moment.get(name)?, state.second_moment.get(name)?] {
            if t.dims() != dims {
                return Err(Error::shape(format!(
                    "`{name}` is {dims:?} but its gradient or moment is {:?}",
                    t.dims()
                )));
            }
        }
    }
    if grads.len() != params.len() || state.first_moment.len() != params.len() || state.second_moment.len() != params.len() {
        return Err(Error::shape("gradient or moment tensors do not match the parameters"));
    }

    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
    for name in &names {
        let g = grads.get(name)?.data();
        let m = state.first_moment.get_mut(name)?.data_mut();
        for (m, &g) in m.iter_mut().zip(g) {
            *m = (beta1 * *m as f64 + (1.0 - beta1) * g as f64) as f32;
        }
        let v = state.second_moment.get_mut(name)?.data_mut();
        for (v, &g) in v.iter_mut().zip(g) {
            *v = (beta2 * *v as f64 + (1.0 - beta2) * g as f64 * g as f64) as f32;
        }
        let m = state.first_moment.get(name)?.data();
        let v = state.second_moment.get(name)?.data();
        let p = params.get_mut(name)?.data_mut();
        for ((p, &m), &v) in p.iter_mut().zip(m).zip(v) {
            let update = lr * (m as f64 / c1) / ((v as f64 / c2).sqrt() + eps);
            *p = (*p as f64 - update) as f32;
        }
    }
    Ok(())
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads.sum_squares().sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = (max_norm / norm) as f32;
        for (_, t) in grads.iter_mut() {
            t.scale(scale);
        }
    }
    norm
}
