//! Adam with bias correction; epsilon is added after the square root.

use alloc::vec::Vec;

use super::{Matrix, ParamGrads, ParamStore, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
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

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|(_, m)| Matrix::zeros(m.rows(), m.cols())).collect();
        Self { config, step: 0, first: zeros(), second: zeros() }
    }

    pub fn first_moment(&self, i: usize) -> &Matrix {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &Matrix {
        &self.second[i]
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamGrads, lr: f64) -> Result<(), TensorError> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(TensorError::Shape { op: "adam_step", lhs: (params.len(), 0), rhs: (grads.len(), 0) });
        }
        for id in params.ids() {
            let (p, g) = (params.get(id), grads.get(id));
            if p.shape() != g.shape() || p.shape() != self.first[id.0].shape() {
                return Err(TensorError::Shape { op: "adam_step", lhs: p.shape(), rhs: g.shape() });
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(beta1, t);
        let c2 = 1.0 - libm::pow(beta2, t);
        for id in params.ids() {
            let g = grads.get(id).data();
            let m = self.first[id.0].data_mut();
            let v = self.second[id.0].data_mut();
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
