use std::borrow::BorrowMut;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::text::PAD;

/// Rescales every gradient by `max_norm / g` when the joint norm
/// `g = sqrt(Σ ‖grad‖²)` exceeds `max_norm`. Returns `g` before clipping.
pub fn clip_global_norm<T: BorrowMut<Tensor>>(grads: &mut [T], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.borrow().squared_norm())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.borrow_mut().data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq)]
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

/// One bias-corrected Adam update of `theta` in place. `t` is the step
/// number after incrementing (1 for the first update).
pub fn adam_update(theta: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &AdamConfig) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// First and second moments per parameter, plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = params.map(|_, t| Tensor::zeros(t.shape().to_vec()));
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Applies one update to every parameter. The PAD row of the embedding
    /// table is left untouched.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, cfg: &AdamConfig) -> Result<()> {
        let g = grads.entries();
        let mut m = self.m.entries_mut();
        let mut v = self.v.entries_mut();
        let mut p = params.entries_mut();
        if g.len() != p.len() || m.len() != p.len() {
            return Err(Error::Contract("gradient structure differs from parameters".into()));
        }
        for (k, (_, theta)) in p.iter().enumerate() {
            if g[k].1.shape() != theta.shape() || m[k].1.shape() != theta.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: theta.shape().to_vec(),
                    rhs: g[k].1.shape().to_vec(),
                });
            }
        }
        self.t += 1;
        for (k, (name, theta)) in p.iter_mut().enumerate() {
            let skip = if *name == "embedding" {
                let w = theta.shape()[1];
                PAD * w..(PAD + 1) * w
            } else {
                0..0
            };
            let n = theta.numel();
            let (grad, mk, vk) = (g[k].1.data(), m[k].1.data_mut(), v[k].1.data_mut());
            let th = theta.data_mut();
            adam_update(&mut th[..skip.start], &grad[..skip.start], &mut mk[..skip.start], &mut vk[..skip.start], self.t, cfg);
            adam_update(&mut th[skip.end..n], &grad[skip.end..n], &mut mk[skip.end..n], &mut vk[skip.end..n], self.t, cfg);
        }
        Ok(())
    }
}
