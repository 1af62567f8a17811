use crate::autodiff::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam update over every block, then clears gradients.
///
/// Non-finite gradients abort the step before any parameter is touched.
pub fn adam_step(store: &mut ParamStore, lr: f64, cfg: AdamConfig) -> Result<()> {
    adam_step_scaled(store, lr, cfg, |_| 1.0)
}

/// Adam with a per-block learning-rate multiplier looked up by block name.
pub fn adam_step_scaled(store: &mut ParamStore, lr: f64, cfg: AdamConfig, factor: impl Fn(&str) -> f64) -> Result<()> {
    if let Some(b) = store.blocks().iter().find(|b| b.grad.iter().any(|g| !g.is_finite())) {
        return Err(Error::Numeric(format!("non-finite gradient in block {}", b.name)));
    }
    store.step += 1;
    let t = store.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for b in store.blocks_mut() {
        let lr = lr * factor(&b.name);
        for i in 0..b.value.len() {
            let g = b.grad[i];
            b.m[i] = cfg.beta1 * b.m[i] + (1.0 - cfg.beta1) * g;
            b.v[i] = cfg.beta2 * b.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = b.m[i] / c1;
            let v_hat = b.v[i] / c2;
            b.value[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
            b.grad[i] = 0.0;
        }
    }
    Ok(())
}

/// Exponential decay from `lr0` at step 0 to `lr_final` at `total`.
pub fn lr_schedule(step: usize, total: usize, lr0: f64, lr_final: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    let frac = step.min(total) as f64 / total as f64;
    lr0 * (lr_final / lr0).powf(frac)
}
