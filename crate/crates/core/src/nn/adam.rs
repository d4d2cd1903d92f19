use super::resnet::NetworkParams;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One bias-corrected Adam update. Slots whose gradient is `None` are left
/// untouched (moments included). Every gradient is validated before any
/// parameter is modified.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &[Option<Tensor>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if !(cfg.lr >= 0.0) {
        return Err(Error::config(format!("learning rate must be non-negative, got {}", cfg.lr)));
    }
    if grads.len() != params.tensors().len() || state.m.len() != grads.len() {
        return Err(Error::dim("gradient list does not match parameter list"));
    }
    for ((g, p), name) in grads.iter().zip(params.tensors()).zip(params.names()) {
        if let Some(g) = g {
            if g.shape() != p.shape() {
                return Err(Error::dim(format!("{name}: gradient shape {:?} vs {:?}", g.shape(), p.shape())));
            }
            if !g.is_finite() {
                return Err(Error::Training { param: name.clone(), detail: "non-finite gradient".into() });
            }
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let Some(g) = &grads[i] else { continue };
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *pv -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
