//! Mini-batch training loop shared by the three agents.
//!
//! Per-example gradients are computed in parallel and summed in example
//! order, so results do not depend on the thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{OptimizerState, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Hard cap on optimizer steps, mostly for tests.
    pub max_steps: Option<usize>,
    /// Learning rate at the last planned step relative to the first; the
    /// rate falls linearly in between.
    #[serde(default = "one")]
    pub final_lr_fraction: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs: 20,
            batch_size: 16,
            patience: 3,
            learning_rate: 3e-3,
            weight_decay: 0.0,
            seed: 0,
            max_steps: None,
            final_lr_fraction: 1.0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidSpec(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::InvalidSpec(
                "final learning-rate fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

impl EvalSummary {
    fn score(&self) -> f64 {
        self.accuracy.unwrap_or(-self.loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train: EvalSummary,
    pub valid: Option<EvalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    pub step_losses: Vec<f64>,
    pub best_epoch: usize,
}

/// Trains `params` in place and leaves the best-scoring epoch's weights,
/// rounded through `f32` so a checkpoint round-trip is lossless.
pub(crate) fn fit<E, G, V>(
    params: &mut ParamSet,
    train: &[E],
    valid: &[E],
    schedule: &TrainSchedule,
    grad_fn: G,
    eval_fn: V,
    trainable: impl Fn(&str) -> bool,
) -> Result<TrainReport>
where
    E: Sync,
    G: Fn(&ParamSet, &E) -> Result<(f64, ParamSet)> + Sync,
    V: Fn(&ParamSet, &[E]) -> Result<EvalSummary>,
{
    schedule.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidData("no training examples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut opt = OptimizerState::adamw(schedule.learning_rate, schedule.weight_decay)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport {
        epochs: Vec::new(),
        step_losses: Vec::new(),
        best_epoch: 0,
    };
    let mut best: Option<(f64, ParamSet)> = None;
    let mut stale = 0;
    let batch = schedule.batch_size.min(train.len());
    let mut planned = schedule.epochs * train.len().div_ceil(batch);
    if let Some(m) = schedule.max_steps {
        planned = planned.min(m);
    }

    'epochs: for epoch in 1..=schedule.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch) {
            if schedule
                .max_steps
                .is_some_and(|m| report.step_losses.len() >= m)
            {
                break 'epochs;
            }
            let snapshot: &ParamSet = params;
            let per_example: Vec<(f64, ParamSet)> = chunk
                .par_iter()
                .map(|&i| grad_fn(snapshot, &train[i]))
                .collect::<Result<_>>()?;
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for (l, g) in &per_example {
                loss += l;
                grads.add_assign(g);
            }
            let scale = 1.0 / chunk.len() as f64;
            grads.scale(scale);
            loss *= scale;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "non-finite loss or gradient at epoch {epoch}"
                )));
            }
            grads.retain(&trainable);
            let progress = report.step_losses.len() as f64 / planned.max(1) as f64;
            opt.learning_rate =
                schedule.learning_rate * (1.0 - (1.0 - schedule.final_lr_fraction) * progress);
            opt.step(params, &grads)?;
            report.step_losses.push(loss);
            loss_sum += loss;
            batches += 1;
        }
        let train_eval = eval_fn(params, train)?;
        let valid_eval = if valid.is_empty() {
            None
        } else {
            Some(eval_fn(params, valid)?)
        };
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            train: train_eval,
            valid: valid_eval,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train {:?} valid {:?}",
            metrics.train_loss,
            metrics.train.accuracy.unwrap_or(metrics.train.loss),
            metrics.valid.map(|v| v.accuracy.unwrap_or(v.loss))
        );
        let score = valid_eval.unwrap_or(train_eval).score();
        report.epochs.push(metrics);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, params.clone()));
            report.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= schedule.patience {
                break;
            }
        }
    }
    if let Some((_, p)) = best {
        *params = p;
    }
    params.quantize_f32();
    Ok(report)
}
