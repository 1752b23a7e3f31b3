use serde::{Deserialize, Serialize};

use crate::constructions::{NetParams, SparsityMask};
use crate::error::{Error, Result};

use super::Gradients;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &NetParams) -> Self {
        AdamState {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place. Entries flagged `false` in `mask` are left untouched.
pub fn adam_step(
    params: &mut NetParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
    mask: Option<&SparsityMask>,
) -> Result<()> {
    if !grads.is_congruent(params) || !state.m.is_congruent(params) || !state.v.is_congruent(params) {
        return Err(Error::shape("adam_step", "gradients or moments do not match the network"));
    }
    if let Some(m) = mask {
        if !m.is_congruent(params) {
            return Err(Error::shape("adam_step", "mask does not match the network"));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    let mask_slices: Vec<Option<&[bool]>> = match mask {
        Some(m) => m.slices().map(Some).collect(),
        None => vec![None; grads.slices().count()],
    };
    let m_slices = state.m.slices_mut();
    let v_slices = state.v.slices_mut();
    for ((((p, g), m), v), keep) in params
        .slices_mut()
        .into_iter()
        .zip(grads.slices())
        .zip(m_slices)
        .zip(v_slices)
        .zip(mask_slices)
    {
        for i in 0..p.len() {
            if keep.is_some_and(|k| !k[i]) {
                continue;
            }
            let gi = g[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
