use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Parameterized;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-5,
            weight_decay: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update with bias correction, followed by decoupled weight
/// decay `θ ← θ − lr·wd·θ`. `step` counts from 1.
pub fn adam_step<P: Parameterized + ?Sized>(
    params: &mut P,
    cfg: &AdamConfig,
    step: u64,
) -> Result<()> {
    if step == 0 {
        return Err(Error::Config("adam step counter starts at 1".into()));
    }
    let t = step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for p in params.params_mut() {
        let n = p.value.len();
        let (value, grad) = (p.value.data_mut(), p.grad.data());
        let (m, v) = (p.adam_m.data_mut(), p.adam_v.data_mut());
        for k in 0..n {
            let g = grad[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            value[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            value[k] -= cfg.lr * cfg.weight_decay * value[k];
        }
    }
    Ok(())
}

/// Step decay: `lr0 · factor^⌊epoch / every⌋`; `every = 0` disables decay.
pub fn lr_schedule(lr0: f64, factor: f64, every: usize, epoch: usize) -> f64 {
    if every == 0 {
        return lr0;
    }
    lr0 * factor.powi((epoch / every) as i32)
}
