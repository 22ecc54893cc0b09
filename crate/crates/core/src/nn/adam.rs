use super::model::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of a flat parameter slice. `t` is the 1-based
/// step number of this update.
pub fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &AdamConfig) {
    debug_assert!(t >= 1);
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for k in 0..params.len() {
        let g = grads[k];
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[k] / c1;
        let v_hat = v[k] / c2;
        params[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// First and second moment accumulators mirroring a [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    /// Number of updates applied so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(p: &ModelParams) -> Self {
        Self {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
        }
    }
}

pub fn adam_step(p: &mut ModelParams, g: &ModelParams, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    state.t += 1;
    let t = state.t;
    let grads = g.named_tensors();
    if grads.len() != state.m.named_tensors().len() {
        return Err(Error::Shape("adam state does not mirror params".into()));
    }
    for (((pt, (_, gt)), mt), vt) in p
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        if pt.len() != gt.len() || mt.len() != pt.len() {
            return Err(Error::Shape("adam tensor size mismatch".into()));
        }
        adam_update(pt.data_mut(), gt.data(), mt.data_mut(), vt.data_mut(), t, cfg);
    }
    if !p.is_finite() {
        return Err(Error::NonFinite("adam update"));
    }
    Ok(())
}
