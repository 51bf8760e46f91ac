//! Adaptive-moment optimizer.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::nncore::params::ModelParams;

/// Standard Adam with bias correction. Moment buffers are keyed by parameter
/// name, so one optimizer instance follows one model across steps.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Result<Self> {
        Self::with_betas(lr, 0.9, 0.999)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(CoreError::Config(format!("learning rate {lr} must be > 0")));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(CoreError::Config(format!(
                "betas ({beta1}, {beta2}) must lie in [0, 1)"
            )));
        }
        Ok(Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            moments: BTreeMap::new(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over every parameter, consuming (and clearing) the grad
    /// slots. A missing grad counts as zero.
    pub fn step(&mut self, params: &mut ModelParams) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, tensor) in params.iter_mut() {
            let grad = tensor.grad.take();
            if let Some(g) = &grad {
                if g.len() != tensor.values.len() {
                    return Err(CoreError::ShapeMismatch {
                        op: "adam_step",
                        left: tensor.shape.clone(),
                        right: vec![g.len()],
                    });
                }
                if !g.iter().all(|v| v.is_finite()) {
                    return Err(CoreError::NonFinite(format!("gradient of {name}")));
                }
            }
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; tensor.values.len()], vec![0.0; tensor.values.len()]));
            for i in 0..tensor.values.len() {
                let gi = grad.as_ref().map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                tensor.values[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            if !tensor.values.iter().all(|x| x.is_finite()) {
                return Err(CoreError::NonFinite(format!("parameter {name} after update")));
            }
        }
        Ok(())
    }
}
