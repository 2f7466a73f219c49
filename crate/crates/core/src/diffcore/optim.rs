use std::f64::consts::PI;

use super::{Gradients, ParamStore, Tensor};
use crate::{Error, Result};

/// Linear warmup from zero to `base_lr`, then cosine decay to `min_lr`.
///
/// The schedule is indexed by fractional epoch (`step / steps_per_epoch`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarmupCosine {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_epochs: u32,
    pub total_epochs: u32,
    pub steps_per_epoch: u64,
}

impl WarmupCosine {
    pub fn lr_at_epoch(&self, epoch: f64) -> f64 {
        let warmup = self.warmup_epochs as f64;
        if epoch < warmup {
            return self.base_lr * epoch / warmup;
        }
        let span = (self.total_epochs as f64 - warmup).max(f64::MIN_POSITIVE);
        let progress = ((epoch - warmup) / span).clamp(0.0, 1.0);
        self.min_lr + (self.base_lr - self.min_lr) * 0.5 * (1.0 + (PI * progress).cos())
    }

    pub fn lr_at_step(&self, step: u64) -> f64 {
        self.lr_at_epoch(step as f64 / self.steps_per_epoch.max(1) as f64)
    }
}

/// AdamW state: decoupled weight decay and bias-corrected moments.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub schedule: WarmupCosine,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first_moments: Vec<Tensor>,
    pub second_moments: Vec<Tensor>,
}

impl OptimState {
    pub fn new(params: &ParamStore, schedule: WarmupCosine, weight_decay: f64) -> Self {
        let zeros = |_: ()| -> Vec<Tensor> {
            params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect()
        };
        OptimState {
            schedule,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moments: zeros(()),
            second_moments: zeros(()),
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.schedule.lr_at_step(self.step)
    }

    /// Applies one update using the learning rate of the current step, then
    /// advances the schedule. Returns the learning rate that was used.
    ///
    /// Every trainable parameter must have a gradient; frozen ones are
    /// skipped. The step is rejected whole if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<f64> {
        if self.first_moments.len() != params.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first_moments.len(),
                params.len()
            )));
        }
        let ids: Vec<_> = params.ids().collect();
        for &id in &ids {
            if params.is_frozen(id) {
                continue;
            }
            let g = grads.param(id).ok_or_else(|| {
                Error::invalid(format!("no gradient for parameter {}", params.name(id)))
            })?;
            if g.shape() != params.get(id).shape() {
                return Err(Error::Shape {
                    op: "optimizer_step",
                    lhs: params.get(id).shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite { op: "optimizer_step" });
            }
        }

        let lr = self.current_lr();
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for id in ids {
            if params.is_frozen(id) {
                continue;
            }
            let g = grads.param(id).expect("checked above");
            let m = &mut self.first_moments[id.index()];
            let v = &mut self.second_moments[id.index()];
            let mut w = params.get(id).clone();
            for (((w, m), v), g) in w
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * self.weight_decay * *w;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            params.set(id, w)?;
        }
        self.step += 1;
        Ok(lr)
    }
}
