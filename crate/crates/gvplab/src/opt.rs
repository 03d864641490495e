//! Bias-corrected Adam over flat parameter vectors.
//!
//! One optimizer instance owns the moment buffers for one parameter vector;
//! the solver, the gradient-shooting baseline, and MLP training all drive the
//! same update rule.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            ..Default::default()
        }
    }
}

/// Moment state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub hyper: AdamParams,
    m: DVector<f64>,
    v: DVector<f64>,
    t: u64,
}

impl Adam {
    pub fn new(dim: usize, hyper: AdamParams) -> Self {
        Adam {
            hyper,
            m: DVector::zeros(dim),
            v: DVector::zeros(dim),
            t: 0,
        }
    }

    /// One in-place update of `params` given `grad`.
    pub fn step(&mut self, params: &mut DVector<f64>, grad: &DVector<f64>) {
        assert_eq!(params.len(), grad.len(), "param/grad shape mismatch");
        assert_eq!(params.len(), self.m.len(), "param/state shape mismatch");
        self.t += 1;
        let b1 = self.hyper.beta1;
        let b2 = self.hyper.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.hyper.lr * m_hat / (v_hat.sqrt() + self.hyper.eps);
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}
