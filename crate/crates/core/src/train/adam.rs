use crate::error::{Error, Result};
use crate::unet::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f32>>,
    pub second: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f32>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        AdamState {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn matches(&self, params: &ModelParams) -> bool {
        self.first.len() == params.tensors().len()
            && self.second.len() == params.tensors().len()
            && params
                .tensors()
                .iter()
                .zip(self.first.iter().zip(&self.second))
                .all(|((_, t), (m, v))| m.len() == t.numel() && v.len() == t.numel())
    }
}

/// One Adam update of every parameter tensor, in place.
///
/// The step counter is incremented before the bias corrections
/// `1 - beta1^t` and `1 - beta2^t` are formed.
pub fn adam_step(params: &mut ModelParams, grads: &[Vec<f32>], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if !state.matches(params) || grads.len() != state.first.len() {
        return Err(Error::InvalidArgument(
            "optimizer state does not match the parameters".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((param, g), m), v) in params
        .tensors_mut()
        .zip(grads)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        if g.len() != param.numel() {
            return Err(Error::shape("adam_step", param.shape(), &[g.len()]));
        }
        for (((p, &g), m), v) in param.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = g as f64;
            let mf = cfg.beta1 * *m as f64 + (1.0 - cfg.beta1) * g;
            let vf = cfg.beta2 * *v as f64 + (1.0 - cfg.beta2) * g * g;
            *m = mf as f32;
            *v = vf as f32;
            let update = cfg.lr * (mf / c1) / ((vf / c2).sqrt() + cfg.eps);
            *p = (*p as f64 - update) as f32;
        }
    }
    Ok(())
}
