use serde::{Deserialize, Serialize};

use super::params::{ClassifierConfig, ModelParams};
use crate::error::{Error, Result};

/// Optimisation and schedule hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Epochs without validation-F1 improvement before stopping.
    pub early_stop_patience: usize,
    pub seeds: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-5,
            weight_decay: 0.01,
            clip_norm: 1.0,
            batch_size: 32,
            max_epochs: 15,
            plateau_factor: 0.5,
            plateau_patience: 5,
            early_stop_patience: 5,
            seeds: 5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.clip_norm, self.plateau_factor, self.eps];
        if positive.iter().any(|v| !(*v > 0.0)) || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("learning rate, clip norm, factor and eps must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.seeds == 0 {
            return Err(Error::InvalidConfig("batch size, epochs and seeds must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(cfg: &ClassifierConfig) -> Self {
        AdamState {
            m: ModelParams::zeros(cfg),
            v: ModelParams::zeros(cfg),
            step: 0,
        }
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / (norm + 1e-6));
    }
    norm
}

/// One AdamW step with decoupled weight decay at learning rate `lr`.
///
/// Gradients are clipped to the configured global norm before the moment
/// update.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::Numeric {
            location: "optimizer".into(),
            detail: "non-finite gradient".into(),
        });
    }
    let mut g = grads.clone();
    clip_global_norm(&mut g, cfg.clip_norm);
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(g.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for ((((_, p), g), (_, m)), (_, v)) in tensors {
        if p.len() != g.data.len() {
            return Err(Error::Precondition("gradient shape does not match parameters".into()));
        }
        for i in 0..p.len() {
            let gi = g.data[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps)) + lr * cfg.weight_decay * p[i];
        }
    }
    Ok(())
}

/// Halves (by `factor`) the learning rate once validation loss has failed to
/// improve for `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    factor: f64,
    patience: usize,
    best: f64,
    bad_epochs: usize,
}

/// Relative margin a loss must beat the best by to count as an improvement.
const PLATEAU_THRESHOLD: f64 = 1e-4;

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        PlateauScheduler {
            lr,
            factor,
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records an epoch's validation loss; returns true when the rate was reduced.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best * (1.0 - PLATEAU_THRESHOLD) || self.best.is_infinite() && val_loss.is_finite() {
            self.best = val_loss;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
            return true;
        }
        false
    }
}
