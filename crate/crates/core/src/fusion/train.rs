use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    adam_step, batch_loss, forward, gradients, ConfigError, DropoutMask, FusionConfig, FusionModel,
    FusionParams,
};
use crate::metrics::{confusion, prf1};
use crate::rng::SeededRng;

// Sub-streams of the configured seed.
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("{split} rows have width {found}, model expects {expected}")]
    Width { split: &'static str, found: usize, expected: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (bias {bias}, max |w| {max_weight})")]
    NonFiniteLoss { epoch: usize, batch: usize, bias: f64, max_weight: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Design matrix rows (already restricted to the active branches) and targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingData {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
}

impl TrainingData {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<bool>) -> Self {
        assert_eq!(x.len(), y.len(), "rows and labels differ in length");
        Self { x, y }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn check(&self, split: &'static str, dim: usize) -> Result<(), TrainError> {
        if self.is_empty() {
            return Err(TrainError::EmptySplit(split));
        }
        if let Some(row) = self.x.iter().find(|r| r.len() != dim) {
            return Err(TrainError::Width { split, found: row.len(), expected: dim });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss under dropout.
    pub train_loss: f64,
    pub validation_loss: f64,
    pub validation_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: FusionConfig,
    pub epochs: Vec<EpochRecord>,
}

fn validation_metrics(params: &FusionParams, data: &TrainingData, config: &FusionConfig) -> (f64, f64) {
    let batch: Vec<(&[f64], bool)> = data.x.iter().map(Vec::as_slice).zip(data.y.iter().copied()).collect();
    let loss = batch_loss(params, &batch, None, config.class_weights);
    let scores: Vec<(f64, bool)> = batch.iter().map(|(x, y)| (forward(params, x, None), *y)).collect();
    (loss, prf1(&confusion(&scores, config.threshold)).f1)
}

/// Minibatch Adam on the weighted loss for `config.epochs` full passes.
///
/// Weights start Glorot-uniform, the training order is reshuffled every
/// epoch, and each sample gets a fresh dropout mask; all three draw from
/// separate streams of `config.seed`. Returns the final-epoch parameters.
pub fn train(
    train: &TrainingData,
    validation: &TrainingData,
    config: &FusionConfig,
) -> Result<(FusionModel, TrainReport), TrainError> {
    config.validate()?;
    let dim = config.joint_dim();
    train.check("train", dim)?;
    validation.check("validation", dim)?;

    let mut params = FusionParams::init(dim, &mut SeededRng::derive(config.seed, STREAM_INIT));
    let mut shuffle_rng = SeededRng::derive(config.seed, STREAM_SHUFFLE);
    let mut dropout_rng = SeededRng::derive(config.seed, STREAM_DROPOUT);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&[f64], bool)> = idx.iter().map(|&i| (train.x[i].as_slice(), train.y[i])).collect();
            let masks: Vec<DropoutMask> =
                idx.iter().map(|_| DropoutMask::sample(dim, config.dropout_rate, &mut dropout_rng)).collect();
            let loss = batch_loss(&params, &batch, Some(&masks), config.class_weights);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    bias: params.b,
                    max_weight: params.w.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
                });
            }
            let grad = gradients(&params, &batch, Some(&masks), config.class_weights);
            adam_step(&mut params, &grad, config.learning_rate);
            loss_sum += loss;
            n_batches += 1;
        }
        let (validation_loss, validation_f1) = validation_metrics(&params, validation, config);
        epochs.push(EpochRecord { epoch, train_loss: loss_sum / n_batches as f64, validation_loss, validation_f1 });
    }

    let report = TrainReport { config: config.clone(), epochs };
    Ok((FusionModel { config: config.clone(), params }, report))
}
