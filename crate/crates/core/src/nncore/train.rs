//! Mini-batch Adam loop with best-checkpoint selection.

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::rng::{batches, seeded};
use crate::error::{Error, Result};

/// Records at or above this count are trained in mini-batches.
pub const FULL_BATCH_LIMIT: usize = 10_000;
pub const DEFAULT_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub epochs: usize,
    /// `None` selects full batch below [`FULL_BATCH_LIMIT`] records and
    /// [`DEFAULT_BATCH`] otherwise.
    pub batch_size: Option<usize>,
    pub adam: AdamConfig,
    /// Cosine-anneal the learning rate down to this value over the run.
    pub final_learning_rate: Option<f64>,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            epochs: 1000,
            batch_size: None,
            adam: AdamConfig::default(),
            final_learning_rate: None,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == Some(0) {
            return Err(Error::Parameter("batch size must be positive".into()));
        }
        if let Some(lr) = self.final_learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Parameter("final learning rate must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn effective_batch(&self, n: usize) -> usize {
        match self.batch_size {
            Some(b) => b.min(n),
            None if n < FULL_BATCH_LIMIT => n,
            None => DEFAULT_BATCH,
        }
    }

    fn learning_rate(&self, epoch: usize) -> f64 {
        let lr0 = self.adam.learning_rate;
        match self.final_learning_rate {
            Some(lr1) if self.epochs > 1 => {
                let t = epoch as f64 / (self.epochs - 1) as f64;
                lr1 + 0.5 * (lr0 - lr1) * (1.0 + (std::f64::consts::PI * t).cos())
            }
            _ => lr0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    /// Full-data loss at the start of each epoch, followed by the loss after
    /// the last epoch (`epochs + 1` entries).
    pub losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
}

/// Mean loss over a set of record indices, optionally accumulating the
/// gradient of that mean into `grad`.
pub trait Objective {
    fn num_records(&self) -> usize;
    fn evaluate(&mut self, params: &[f64], indices: &[usize], grad: Option<&mut [f64]>) -> Result<f64>;
}

/// Runs Adam from `params` and returns the parameters with the lowest full-data
/// loss seen at any epoch boundary.
pub fn minimize<O: Objective>(
    objective: &mut O,
    mut params: Vec<f64>,
    cfg: &OptimizerConfig,
) -> Result<(Vec<f64>, LossHistory)> {
    cfg.validate()?;
    let n = objective.num_records();
    if n == 0 {
        return Err(Error::Parameter("cannot train on an empty dataset".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let batch = cfg.effective_batch(n);
    let mut rng = seeded(cfg.seed);
    let mut adam = AdamState::new(params.len(), cfg.adam);
    let mut grad = vec![0.0; params.len()];

    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let mut best = (f64::INFINITY, 0, params.clone());
    let mut record = |epoch: usize, loss: f64, params: &[f64], losses: &mut Vec<f64>| -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("loss is {loss}"),
                losses: losses.clone(),
            });
        }
        losses.push(loss);
        if loss < best.0 {
            best = (loss, epoch, params.to_vec());
        }
        Ok(())
    };

    for epoch in 0..cfg.epochs {
        adam.config.learning_rate = cfg.learning_rate(epoch);
        if batch >= n {
            grad.fill(0.0);
            let loss = objective.evaluate(&params, &all, Some(&mut grad))?;
            record(epoch, loss, &params, &mut losses)?;
            adam.step(&mut params, &grad).map_err(|e| divergence(epoch, e, &losses))?;
        } else {
            let loss = objective.evaluate(&params, &all, None)?;
            record(epoch, loss, &params, &mut losses)?;
            for b in batches(n, batch, &mut rng) {
                grad.fill(0.0);
                objective.evaluate(&params, &b, Some(&mut grad))?;
                adam.step(&mut params, &grad).map_err(|e| divergence(epoch, e, &losses))?;
            }
        }
    }
    let final_loss = objective.evaluate(&params, &all, None)?;
    record(cfg.epochs, final_loss, &params, &mut losses)?;

    let (best_loss, best_epoch, best_params) = best;
    Ok((
        best_params,
        LossHistory {
            losses,
            best_epoch,
            best_loss,
        },
    ))
}

fn divergence(epoch: usize, e: Error, losses: &[f64]) -> Error {
    match e {
        Error::NonFiniteGradient { index } => Error::Divergence {
            epoch,
            detail: format!("non-finite gradient at parameter {index}"),
            losses: losses.to_vec(),
        },
        other => other,
    }
}
