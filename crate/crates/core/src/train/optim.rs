//! AdamW with decoupled weight decay, and the cosine-annealing schedule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::params::Parameters;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moments are allocated lazily on the first step, one array per visited
/// parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamWState {
    pub fn new(config: AdamWConfig) -> Self {
        AdamWState {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    /// One update. Arrays whose name fails `trainable` are left untouched
    /// (parameters and moments).
    pub fn step<P: Parameters>(
        &mut self,
        params: &mut P,
        grads: &P,
        lr: f64,
        trainable: &dyn Fn(&str) -> bool,
    ) -> Result<()> {
        let mut g_arrays: Vec<Vec<f64>> = Vec::new();
        grads.visit(&mut |_, xs| g_arrays.push(xs.to_vec()));
        let mut shapes = Vec::new();
        params.visit(&mut |_, xs| shapes.push(xs.len()));
        if shapes.len() != g_arrays.len() || shapes.iter().zip(&g_arrays).any(|(n, g)| *n != g.len()) {
            return config("adamw: gradient layout does not match parameters");
        }
        if self.m.is_empty() {
            self.m = shapes.iter().map(|&n| vec![0.0; n]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != shapes.len() || self.m.iter().zip(&shapes).any(|(m, n)| m.len() != *n) {
            return config("adamw: moment layout does not match parameters");
        }

        self.t += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let (m_all, v_all) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        params.visit_mut(&mut |name, theta| {
            let i = idx;
            idx += 1;
            if !trainable(name) {
                return;
            }
            let (m, v, g) = (&mut m_all[i], &mut v_all[i], &g_arrays[i]);
            for k in 0..theta.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                theta[k] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * theta[k]);
            }
        });
        Ok(())
    }
}

/// `lr_min + ½(lr_max - lr_min)(1 + cos(π t / T))`; `t > T` gives `lr_min`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    let total = total.max(1);
    if t >= total {
        return lr_min;
    }
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * t as f64 / total as f64).cos())
}
