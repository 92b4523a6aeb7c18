//! RMSProp with momentum, exponential per-step learning-rate decay, and a
//! checkpointed training loop.

use std::sync::Arc;

use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::data::{rng, shuffle, Dataset};
use crate::error::{Error, Result};
use crate::model::{init_params, Batch, MlpObjective, ModelSpec};
use crate::ndcore::{LossOperator, Objective, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmsPropConfig {
    pub base_lr: f64,
    /// Learning-rate factor accumulated over one epoch, applied as an
    /// equivalent per-step exponential decay.
    pub per_epoch_lr_decay: f64,
    pub rms_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            base_lr: 0.00036,
            per_epoch_lr_decay: 0.75,
            rms_decay: 0.95,
            momentum: 0.22,
            batch_size: 32,
            epsilon: 1e-10,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.base_lr > 0.0
            && self.base_lr.is_finite()
            && self.per_epoch_lr_decay > 0.0
            && self.per_epoch_lr_decay <= 1.0
            && self.rms_decay > 0.0
            && self.rms_decay < 1.0
            && (0.0..1.0).contains(&self.momentum)
            && self.batch_size >= 1
            && self.epsilon >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid RMSProp configuration: {self:?}")))
        }
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size).max(1)
    }

    pub fn per_step_decay(&self, steps_per_epoch: usize) -> f64 {
        self.per_epoch_lr_decay.powf(1.0 / steps_per_epoch as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub theta: ParamVector,
    pub accumulator: Vec<f64>,
    pub momentum_buffer: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    base_lr: f64,
    per_step_decay: f64,
    rms_decay: f64,
    momentum: f64,
    epsilon: f64,
}

impl TrainerState {
    pub fn new(theta: ParamVector, cfg: &RmsPropConfig, steps_per_epoch: usize) -> Result<Self> {
        cfg.validate()?;
        let d = theta.dim();
        Ok(TrainerState {
            theta,
            accumulator: vec![0.0; d],
            momentum_buffer: vec![0.0; d],
            step: 0,
            lr: cfg.base_lr,
            base_lr: cfg.base_lr,
            per_step_decay: cfg.per_step_decay(steps_per_epoch),
            rms_decay: cfg.rms_decay,
            momentum: cfg.momentum,
            epsilon: cfg.epsilon,
        })
    }

    /// One update:
    ///
    /// ```text
    /// acc ← ρ·acc + (1−ρ)·g²
    /// mom ← μ·mom + lr·g/√(acc+ε)
    /// θ   ← θ − mom
    /// ```
    ///
    /// followed by the learning-rate decay.
    pub fn rmsprop_step(&mut self, grad: &ParamVector) -> Result<()> {
        grad.check_dim(self.theta.dim())?;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::non_finite(format!("gradient coordinate {i} at step {}", self.step)));
        }
        let (rho, mu, lr, eps) = (self.rms_decay, self.momentum, self.lr, self.epsilon);
        let theta = self.theta.as_mut_slice();
        for i in 0..theta.len() {
            let g = grad[i];
            let acc = rho * self.accumulator[i] + (1.0 - rho) * g * g;
            self.accumulator[i] = acc;
            let m = mu * self.momentum_buffer[i] + lr * g / (acc + eps).sqrt();
            self.momentum_buffer[i] = m;
            theta[i] -= m;
        }
        if let Some(i) = theta.iter().position(|x| !x.is_finite()) {
            return Err(Error::non_finite(format!("parameter {i} after step {}", self.step)));
        }
        self.step += 1;
        self.lr = self.base_lr * self.per_step_decay.powi(self.step as i32);
        Ok(())
    }
}

/// Epoch-wise reshuffled minibatch indices.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    rng: Xoshiro256PlusPlus,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        BatchSampler { order: (0..n).collect(), pos: n, batch_size, rng: rng(seed) }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos >= self.order.len() {
            shuffle(&mut self.order, &mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub theta: ParamVector,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub total_steps: u64,
    /// Zero keeps only the first and last checkpoint.
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Schedule {
    pub fn is_checkpoint(&self, t: u64) -> bool {
        t == 0 || t == self.total_steps || (self.checkpoint_every > 0 && t.is_multiple_of(self.checkpoint_every))
    }
}

/// Runs RMSProp over the terms of `op` from `theta0`, recording the full
/// training loss at every checkpoint step.
pub fn train_objective<O: Objective>(
    op: &LossOperator<O>,
    theta0: ParamVector,
    cfg: &RmsPropConfig,
    schedule: Schedule,
) -> Result<Vec<Checkpoint>> {
    let n = op.terms();
    let mut state = TrainerState::new(theta0, cfg, cfg.steps_per_epoch(n))?;
    let mut sampler = BatchSampler::new(n, cfg.batch_size, schedule.seed);
    let mut checkpoints = Vec::new();
    let record = |state: &TrainerState, out: &mut Vec<Checkpoint>| -> Result<()> {
        let loss = op.loss(&state.theta).map_err(|e| at_step(e, state.step))?;
        out.push(Checkpoint { step: state.step, theta: state.theta.clone(), loss, lr: state.lr });
        Ok(())
    };
    record(&state, &mut checkpoints)?;
    while state.step < schedule.total_steps {
        let batch = sampler.next_batch();
        let (_, grad) = op.loss_and_grad_terms(&state.theta, &batch).map_err(|e| at_step(e, state.step))?;
        state.rmsprop_step(&grad)?;
        if schedule.is_checkpoint(state.step) {
            record(&state, &mut checkpoints)?;
        }
    }
    Ok(checkpoints)
}

fn at_step(e: Error, step: u64) -> Error {
    match e {
        Error::NonFinite { context } => Error::NonFinite { context: format!("{context} at step {step}") },
        other => other,
    }
}

/// Trains a freshly initialized model on the whole dataset.
pub fn train(spec: &ModelSpec, data: Arc<Dataset>, cfg: &RmsPropConfig, schedule: Schedule) -> Result<Vec<Checkpoint>> {
    let op = LossOperator::new(MlpObjective::new(spec.clone(), Batch::full(data))?, 0.0)?;
    train_objective(&op, init_params(spec)?, cfg, schedule)
}
