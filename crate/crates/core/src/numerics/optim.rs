//! Adam and the development-metric plateau schedules.

use serde::{Deserialize, Serialize};

use super::tensor::{Gradients, ParameterSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
    pub lr: f64,
    /// Trailing count of epochs without development improvement.
    pub plateau_counter: usize,
}

impl OptimizerState {
    pub fn new(params: &ParameterSet, lr: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        let zeros: Vec<Vec<f64>> = params
            .ids()
            .map(|id| vec![0.0; params.tensor(id).len()])
            .collect();
        Ok(OptimizerState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            lr,
            plateau_counter: 0,
        })
    }
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &Gradients,
    state: &mut OptimizerState,
    config: &AdamConfig,
) -> Result<()> {
    for id in params.ids() {
        if grads.get(id).iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingFault {
                param: params.primary_name(id).to_owned(),
                message: "non-finite gradient".into(),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - config.beta1.powi(t);
    let correction2 = 1.0 - config.beta2.powi(t);

    for id in params.ids().collect::<Vec<_>>() {
        let tensor = params.tensor_mut(id);
        if !tensor.requires_grad() {
            continue;
        }
        let grad = grads.get(id);
        let m = &mut state.first_moment[id.index()];
        let v = &mut state.second_moment[id.index()];
        for (k, value) in tensor.values_mut().iter_mut().enumerate() {
            let g = grad[k];
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
            let m_hat = m[k] / correction1;
            let v_hat = v[k] / correction2;
            *value -= state.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

/// Number of trailing entries that fail to beat the best earlier entry.
pub fn non_improving_streak(history: &[f64], higher_is_better: bool) -> usize {
    let better = |a: f64, b: f64| if higher_is_better { a > b } else { a < b };
    let mut best: Option<f64> = None;
    let mut streak = 0;
    for &h in history {
        match best {
            Some(b) if !better(h, b) => streak += 1,
            _ => {
                best = Some(h);
                streak = 0;
            }
        }
    }
    streak
}

/// Learning-rate plateau rule for the two training recipes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleVariant {
    /// Reduce after each non-improving epoch, stop after 3.
    #[default]
    A,
    /// Reduce after every 2 non-improving epochs, stop after 5.
    B,
}

impl ScheduleVariant {
    pub fn patience(self) -> usize {
        match self {
            ScheduleVariant::A => 1,
            ScheduleVariant::B => 2,
        }
    }

    pub fn stop_patience(self) -> usize {
        match self {
            ScheduleVariant::A => 3,
            ScheduleVariant::B => 5,
        }
    }

    pub const FACTOR: f64 = 0.25;
}

impl std::str::FromStr for ScheduleVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(ScheduleVariant::A),
            "b" | "B" => Ok(ScheduleVariant::B),
            other => Err(Error::Config(format!("unknown schedule `{other}`"))),
        }
    }
}

/// Multiply the learning rate by `1 − factor` whenever the trailing
/// non-improving streak of the development accuracy reaches a multiple of
/// `patience`.
pub fn plateau_lr_schedule(
    state: &mut OptimizerState,
    dev_metric_history: &[f64],
    factor: f64,
    patience: usize,
) -> f64 {
    let streak = non_improving_streak(dev_metric_history, true);
    state.plateau_counter = streak;
    if patience > 0 && streak > 0 && streak % patience == 0 {
        state.lr *= 1.0 - factor;
    }
    state.lr
}
