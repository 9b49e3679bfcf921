//! Adam and the validation-plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::network::ModelParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_LR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected update in place.
    pub fn update(&mut self, params: &mut ModelParams, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::InvalidConfig(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let p = &mut params.tensors[i].tensor;
            if g.shape() != p.shape() {
                return Err(Error::shape("Adam::update", g.shape(), p.shape()));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, (pj, gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                if self.lr != 0.0 {
                    let mhat = m[j] / bc1;
                    let vhat = v[j] / bc2;
                    *pj -= self.lr * mhat / (vhat.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}

/// Multiplies the rate by `factor` after `patience` consecutive epochs without
/// a strict improvement of the best validation loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub patience: usize,
    pub factor: f64,
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        Self {
            patience: 3,
            factor: 0.5,
            best: None,
            bad_epochs: 0,
        }
    }
}

impl PlateauSchedule {
    /// Feeds one validation loss; returns true when the rate was decayed.
    pub fn observe(&mut self, val_loss: f64, lr: &mut f64) -> bool {
        match self.best {
            Some(b) if !(val_loss < b) => self.bad_epochs += 1,
            _ => {
                self.best = Some(val_loss);
                self.bad_epochs = 0;
            }
        }
        if self.bad_epochs >= self.patience {
            *lr *= self.factor;
            self.bad_epochs = 0;
            true
        } else {
            false
        }
    }
}
