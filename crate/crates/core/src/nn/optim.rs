//! Adam and RMSprop for flat parameter lists.
//!
//! Both optimizers minimize: `params ← params − step(grads)`.

use crate::autodiff::Tensor;
use crate::error::{contract, Result, VieError};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64, params: &[Tensor]) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    /// One bias-corrected Adam update.
    pub fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        check_shapes(&self.m, params, grads)?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((w, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmspropState {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub step: u64,
    sq: Vec<Tensor>,
}

impl RmspropState {
    pub fn new(lr: f64, params: &[Tensor]) -> Self {
        RmspropState {
            lr,
            decay: 0.9,
            eps: 1e-8,
            step: 0,
            sq: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        check_shapes(&self.sq, params, grads)?;
        self.step += 1;
        for ((p, g), s) in params.iter_mut().zip(grads).zip(self.sq.iter_mut()) {
            for ((w, &g), s) in p.data_mut().iter_mut().zip(g.data()).zip(s.data_mut()) {
                *s = self.decay * *s + (1.0 - self.decay) * g * g;
                *w -= self.lr * g / (s.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

fn check_shapes(state: &[Tensor], params: &[Tensor], grads: &[Tensor]) -> Result<()> {
    if state.len() != params.len() || grads.len() != params.len() {
        return contract(format!(
            "optimizer tracks {} tensors, got {} params and {} grads",
            state.len(),
            params.len(),
            grads.len()
        ));
    }
    for ((s, p), g) in state.iter().zip(params).zip(grads) {
        if s.shape() != p.shape() || g.shape() != p.shape() {
            return contract("parameter/gradient shapes disagree with optimizer state");
        }
    }
    if grads.iter().any(|g| !g.all_finite()) {
        return Err(VieError::Training {
            component: "optimizer".into(),
            message: "non-finite gradient".into(),
        });
    }
    Ok(())
}

/// Rescale `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}
