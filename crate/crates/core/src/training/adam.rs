//! Bias-corrected Adam over a flat parameter vector.

use crate::error::{Error, Result};
use crate::model::{ParamGroup, RetinaModel};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    groups: Vec<ParamGroup>,
}

impl OptimizerState {
    pub fn new(parameter_count: usize) -> Self {
        Self {
            first_moment: vec![0.0; parameter_count],
            second_moment: vec![0.0; parameter_count],
            step_count: 0,
            groups: Vec::new(),
        }
    }

    /// State sized for `model`, with parameter groups for diagnostics.
    pub fn for_model<T: Real>(model: &RetinaModel<T>) -> Self {
        Self { groups: model.parameter_groups(), ..Self::new(model.parameter_count()) }
    }

    fn describe(&self, index: usize) -> String {
        match self.groups.iter().find(|g| g.range.contains(&index)) {
            Some(g) => format!("{}[{}]", g.name, index - g.range.start),
            None => format!("parameter[{index}]"),
        }
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::InvalidInput(format!(
            "adam_step: {} params, {} grads, state for {}",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of {} is {}", state.describe(i), grads[i])));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let correction1 = 1.0 - cfg.beta1.powi(t);
    let correction2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}
