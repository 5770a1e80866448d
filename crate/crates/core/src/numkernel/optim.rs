use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::{ParamSet, Tensor2};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    AdamW,
}

/// Optimizer hyper-parameters plus per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    first_moment: BTreeMap<String, Tensor2>,
    second_moment: BTreeMap<String, Tensor2>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, weight_decay: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "weight decay must be non-negative, got {weight_decay}"
            )));
        }
        Ok(OptimizerState {
            kind,
            learning_rate,
            weight_decay,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
            step_count: 0,
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate, 0.0)
    }

    pub fn adamw(learning_rate: f64, weight_decay: f64) -> Result<Self> {
        Self::new(OptimizerKind::AdamW, learning_rate, weight_decay)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every parameter named in `grads`. Parameters
    /// absent from `grads` are left untouched, which is how frozen
    /// sub-networks are expressed.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        for (name, g) in grads.iter() {
            let p = params.try_get(name).ok_or_else(|| {
                Error::InvalidShape(format!("gradient for unknown parameter {name}"))
            })?;
            if p.shape() != g.shape() {
                return Err(Error::InvalidShape(format!(
                    "parameter {name} is {:?} but its gradient is {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step_count += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (name, g) in grads.iter() {
                    params.get_mut(name).add_scaled(g, -lr);
                }
            }
            OptimizerKind::AdamW => {
                let t = self.step_count as i32;
                let bc1 = 1.0 - ADAM_BETA1.powi(t);
                let bc2 = 1.0 - ADAM_BETA2.powi(t);
                for (name, g) in grads.iter() {
                    let m = self
                        .first_moment
                        .entry(name.clone())
                        .or_insert_with(|| Tensor2::zeros(g.rows(), g.cols()));
                    let v = self
                        .second_moment
                        .entry(name.clone())
                        .or_insert_with(|| Tensor2::zeros(g.rows(), g.cols()));
                    let p = params.get_mut(name);
                    let pd = p.data_mut();
                    let md = m.data_mut();
                    let vd = v.data_mut();
                    for (i, &gi) in g.data().iter().enumerate() {
                        md[i] = ADAM_BETA1 * md[i] + (1.0 - ADAM_BETA1) * gi;
                        vd[i] = ADAM_BETA2 * vd[i] + (1.0 - ADAM_BETA2) * gi * gi;
                        let m_hat = md[i] / bc1;
                        let v_hat = vd[i] / bc2;
                        pd[i] -= lr * self.weight_decay * pd[i];
                        pd[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::NumericalFailure("parameters diverged".into()));
        }
        Ok(())
    }
}
