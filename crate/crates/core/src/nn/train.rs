use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{loss, rng_for, AdamConfig, AdamState, MlpModel};
use crate::error::{Error, Result};

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop once the mean per-sample training loss of an epoch drops below this.
    pub stop_train_error: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            stop_train_error: 0.02,
            batch_size: 256,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample cross-entropy of each epoch, measured on the training
    /// batches as they were fitted (dropout active).
    pub epoch_losses: Vec<f64>,
    /// Mean per-sample loss of every minibatch, in step order.
    pub step_losses: Vec<f64>,
    pub steps: u64,
    pub stopped_early: bool,
}

/// Minibatch Adam training with per-epoch reshuffling.
///
/// `labels` must be 0 or 1 and contain both classes. Deterministic for a fixed
/// `config.seed`.
pub fn train(model: &mut MlpModel, x: ArrayView2<f64>, labels: &[f64], config: &TrainConfig) -> Result<TrainReport> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("training set has no rows".into()));
    }
    if labels.len() != n {
        return Err(Error::shape(format!("{n} labels"), labels.len()));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Domain(format!("label {bad} is not 0 or 1")));
    }
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 {
        return Err(Error::SingleClass("benign only"));
    }
    if positives == n {
        return Err(Error::SingleClass("malware only"));
    }
    if config.batch_size == 0 {
        return Err(Error::Domain("batch size must be positive".into()));
    }
    model.validate()?;
    if x.ncols() != model.input_dim() {
        return Err(Error::shape(model.input_dim(), x.ncols()));
    }

    let mut shuffle_rng = rng_for(config.seed, SHUFFLE_STREAM);
    let mut dropout_rng = rng_for(config.seed, DROPOUT_STREAM);
    let mut adam = AdamState::new(model, config.adam);
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport {
        epoch_losses: Vec::new(),
        step_losses: Vec::new(),
        steps: 0,
        stopped_early: false,
    };

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), idx);
            let yb: Vec<f64> = idx.iter().map(|&i| labels[i]).collect();
            let (out, cache) = model.forward(xb.view(), true, &mut dropout_rng)?;
            let batch_loss = loss(out.as_slice().unwrap(), &yb)?;
            let grads = model.backward(&cache, &yb)?;
            adam.step(model, &grads)?;
            model.check_finite()?;
            total += batch_loss;
            report.step_losses.push(batch_loss / idx.len() as f64);
            report.steps += 1;
        }
        let mean = total / n as f64;
        report.epoch_losses.push(mean);
        log::debug!("epoch {} mean loss {mean:.6}", epoch + 1);
        if mean < config.stop_train_error {
            report.stopped_early = true;
            break;
        }
    }
    Ok(report)
}
