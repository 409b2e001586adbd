use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stab: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_stab: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    if !params.same_shapes(grads) {
        return Err(Error::shape(
            "gradients shaped like parameters",
            "mismatched gradient set",
        ));
    }
    if !params.same_shapes(&state.m) {
        return Err(Error::shape(
            "moments shaped like parameters",
            "mismatched optimizer state",
        ));
    }
    state.step += 1;
    let c = state.config;
    let n = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(n);
    let bc2 = 1.0 - c.beta2.powi(n);
    let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
    let (ob1, ob2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
    let step_size = T::from_f64(c.lr / bc1);
    let inv_sqrt_bc2 = T::from_f64(1.0 / bc2.sqrt());
    let eps = T::from_f64(c.eps_stab);
    for (((p, g), m), v) in params
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(state.m.tensors.iter_mut())
        .zip(state.v.tensors.iter_mut())
    {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = b1 * m.data[i] + ob1 * gi;
            v.data[i] = b2 * v.data[i] + ob2 * gi * gi;
            let denom = v.data[i].sqrt() * inv_sqrt_bc2 + eps;
            p.data[i] -= step_size * m.data[i] / denom;
        }
    }
    Ok(())
}
