use serde::{Deserialize, Serialize};

use super::{Param, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty coefficient, added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-6 }
    }
}

pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Scalar>(config: AdamConfig, params: &[Param<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update from gradients that are already averaged over the batch.
    pub fn step<T: Scalar>(&mut self, params: &mut [Param<T>], grads: &[Vec<T>]) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &gi), mi), vi) in p.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let wf = w.to_f64();
                let gf = gi.to_f64() + c.weight_decay * wf;
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gf;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gf * gf;
                let update = c.learning_rate * (*mi / bc1) / ((*vi / bc2).sqrt() + c.eps);
                *w = T::from_f64(wf - update);
            }
        }
    }
}
