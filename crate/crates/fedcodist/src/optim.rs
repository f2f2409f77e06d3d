//! Optimizer state machines: client SGD, Adam (used both for the FedAdam
//! server updates and for distillation), linear learning-rate decay, and
//! explicit moment reset.
//!
//! States are single-owner values; a step returns the new parameters and the
//! new state rather than mutating in place. Distinct optimizers may advance
//! concurrently, but a single state must be stepped sequentially.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamVector;

/// Client-side SGD with a constant learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
}

/// `params - lr * grad`, elementwise.
pub fn sgd_step(params: &ParamVector, grad: &ParamVector, config: &SgdConfig) -> Result<ParamVector> {
    params.add_scaled(grad, -config.learning_rate)
}

/// Adam moment state. Defaults follow the FedAdam setup used throughout:
/// `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-5`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamVector,
    pub v: ParamVector,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

pub const ADAM_DEFAULT_BETA1: f64 = 0.9;
pub const ADAM_DEFAULT_BETA2: f64 = 0.999;
pub const ADAM_DEFAULT_EPSILON: f64 = 1e-5;

impl AdamState {
    /// Fresh state (zero moments) shaped like `template`.
    pub fn new(template: &ParamVector) -> Self {
        Self {
            m: template.zeros_like(),
            v: template.zeros_like(),
            step_count: 0,
            beta1: ADAM_DEFAULT_BETA1,
            beta2: ADAM_DEFAULT_BETA2,
            epsilon: ADAM_DEFAULT_EPSILON,
        }
    }

    pub fn is_fresh(&self) -> bool {
        self.step_count == 0
            && self.m.values().iter().all(|&x| x == 0.0)
            && self.v.values().iter().all(|&x| x == 0.0)
    }
}

/// One bias-corrected Adam step treating `grad` as the gradient.
pub fn adam_step(
    params: &ParamVector,
    grad: &ParamVector,
    state: &AdamState,
    lr: f64,
) -> Result<(ParamVector, AdamState)> {
    params.ensure_compatible(grad, "adam gradient")?;
    params.ensure_compatible(&state.m, "adam state")?;
    let t = state.step_count + 1;
    let mut m = state.m.clone();
    let mut v = state.v.clone();
    let mut new_params = params.clone();
    let bc1 = 1.0 - state.beta1.powi(t as i32);
    let bc2 = 1.0 - state.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grad.values()[i];
        let mi = state.beta1 * m.values()[i] + (1.0 - state.beta1) * g;
        let vi = state.beta2 * v.values()[i] + (1.0 - state.beta2) * g * g;
        m.values_mut()[i] = mi;
        v.values_mut()[i] = vi;
        let m_hat = mi / bc1;
        let v_hat = vi / bc2;
        new_params.values_mut()[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok((
        new_params,
        AdamState {
            m,
            v,
            step_count: t,
            ..*state
        },
    ))
}

/// Zeroes both moments and the step counter; hyperparameters are preserved.
pub fn reset_moments(state: &AdamState) -> AdamState {
    AdamState {
        m: state.m.zeros_like(),
        v: state.v.zeros_like(),
        step_count: 0,
        ..*state
    }
}

/// Linearly decaying learning rate reaching exactly zero at `total_rounds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSchedule {
    pub initial_lr: f64,
    pub total_rounds: u64,
}

/// `initial_lr * (1 - round/total_rounds)`.
pub fn schedule_lr(schedule: &LinearSchedule, round: u64) -> Result<f64> {
    if round > schedule.total_rounds {
        return Err(Error::ScheduleExhausted {
            round,
            total_rounds: schedule.total_rounds,
        });
    }
    Ok(schedule.initial_lr * (1.0 - round as f64 / schedule.total_rounds as f64))
}
