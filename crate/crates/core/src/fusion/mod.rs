//! The fused classification head.
//!
//! Modality vectors are concatenated, passed through inverted dropout, and
//! mapped to one logit by a dense layer; the sigmoid of the logit is the
//! probability that a post is hidden-economy selling. Training minimizes
//! class-weighted binary cross-entropy with Adam.
//!
//! Single-modality models share this code path: their configuration simply
//! sets the width of unused branches to zero.

mod checkpoint;
mod train;

pub use checkpoint::{CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{train, EpochRecord, TrainError, TrainReport, TrainingData};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureBundle, FeatureError, Modality, BRANCH_DIMS};
use crate::rng::SeededRng;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside the loss.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub const IMBALANCED: ClassWeights = ClassWeights { negative: 0.4, positive: 1.6 };
    pub const UNIFORM: ClassWeights = ClassWeights { negative: 1.0, positive: 1.0 };
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self::IMBALANCED
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("branch width {found} for {branch} must be 0 or {expected}")]
    BranchWidth { branch: &'static str, found: usize, expected: usize },
    #[error("at least one branch must be active")]
    NoBranches,
    #[error("dropout rate {0} must be in [0, 1)")]
    Dropout(f64),
    #[error("class weights must be positive")]
    Weights,
    #[error("learning rate must be positive")]
    LearningRate,
    #[error("batch size must be positive")]
    BatchSize,
}

/// Hyper-parameters of the head and its training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Widths of the hashtag, comment and image branches; 0 disables one.
    pub dims: [usize; 3],
    pub dropout_rate: f64,
    pub class_weights: ClassWeights,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            dims: BRANCH_DIMS,
            dropout_rate: 0.5,
            class_weights: ClassWeights::IMBALANCED,
            learning_rate: 1e-4,
            epochs: 100,
            batch_size: 32,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn joint_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Same hyper-parameters, restricted to the given modalities.
    pub fn with_modalities(&self, active: &[Modality]) -> Self {
        let mut dims = [0; 3];
        for m in active {
            dims[m.index()] = BRANCH_DIMS[m.index()];
        }
        Self { dims, ..self.clone() }
    }

    pub fn active_modalities(&self) -> Vec<Modality> {
        Modality::ALL.into_iter().filter(|m| self.dims[m.index()] > 0).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (m, (&d, &full)) in Modality::ALL.iter().zip(self.dims.iter().zip(&BRANCH_DIMS)) {
            if d != 0 && d != full {
                return Err(ConfigError::BranchWidth { branch: m.as_str(), found: d, expected: full });
            }
        }
        if self.joint_dim() == 0 {
            return Err(ConfigError::NoBranches);
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ConfigError::Dropout(self.dropout_rate));
        }
        if !(self.class_weights.negative > 0.0 && self.class_weights.positive > 0.0) {
            return Err(ConfigError::Weights);
        }
        if !(self.learning_rate > 0.0) {
            return Err(ConfigError::LearningRate);
        }
        if self.batch_size == 0 {
            return Err(ConfigError::BatchSize);
        }
        Ok(())
    }
}

/// Adam moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m_w: Vec<f64>,
    pub v_w: Vec<f64>,
    pub m_b: f64,
    pub v_b: f64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self { step: 0, m_w: vec![0.0; dim], v_w: vec![0.0; dim], m_b: 0.0, v_b: 0.0 }
    }
}

/// Dense-layer weights, bias and optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub w: Vec<f64>,
    pub b: f64,
    pub adam: AdamState,
}

impl FusionParams {
    pub fn zeros(dim: usize) -> Self {
        Self { w: vec![0.0; dim], b: 0.0, adam: AdamState::new(dim) }
    }

    /// Glorot-uniform weights for a `dim → 1` layer, zero bias.
    pub fn init(dim: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (dim as f64 + 1.0)).sqrt();
        let w = (0..dim).map(|_| rng.uniform(-limit, limit)).collect();
        Self { w, b: 0.0, adam: AdamState::new(dim) }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite() && self.w.iter().all(|v| v.is_finite())
    }
}

/// One sample's dropout draw: which units survive, and the rescale factor
/// `1 / (1 - rate)` applied to survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    keep: Vec<bool>,
    scale: f64,
}

impl DropoutMask {
    pub fn sample(dim: usize, rate: f64, rng: &mut SeededRng) -> Self {
        if rate == 0.0 {
            return Self { keep: vec![true; dim], scale: 1.0 };
        }
        let keep_prob = 1.0 - rate;
        let keep = (0..dim).map(|_| rng.bernoulli(keep_prob)).collect();
        Self { keep, scale: 1.0 / keep_prob }
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    /// The dropped-and-rescaled input.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.keep).map(|(v, &k)| if k { v * self.scale } else { 0.0 }).collect()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `w·x̃ + b`, with `x̃` the masked input when a mask is given.
pub fn logit(params: &FusionParams, x: &[f64], mask: Option<&DropoutMask>) -> f64 {
    debug_assert_eq!(x.len(), params.w.len());
    let dot = match mask {
        None => params.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>(),
        Some(m) => {
            let s: f64 = params
                .w
                .iter()
                .zip(x)
                .zip(&m.keep)
                .filter(|(_, &k)| k)
                .map(|((w, v), _)| w * v)
                .sum();
            s * m.scale
        }
    };
    dot + params.b
}

/// Training (with a dropout mask) or evaluation (without) forward pass.
pub fn forward(params: &FusionParams, x: &[f64], mask: Option<&DropoutMask>) -> f64 {
    sigmoid(logit(params, x, mask))
}

/// `-(w₊·y·ln p + w₋·(1-y)·ln(1-p))` with `p` clamped away from 0 and 1.
pub fn weighted_loss(p: f64, y: bool, weights: ClassWeights) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    if y {
        -weights.positive * p.ln()
    } else {
        -weights.negative * (1.0 - p).ln()
    }
}

/// Derivative of [`weighted_loss`] with respect to the logit (unclamped).
pub fn loss_grad_logit(p: f64, y: bool, weights: ClassWeights) -> f64 {
    if y {
        weights.positive * (p - 1.0)
    } else {
        weights.negative * p
    }
}

/// Mean loss over a batch, optionally under per-sample dropout masks.
pub fn batch_loss(
    params: &FusionParams,
    batch: &[(&[f64], bool)],
    masks: Option<&[DropoutMask]>,
    weights: ClassWeights,
) -> f64 {
    let total: f64 = batch
        .iter()
        .enumerate()
        .map(|(i, (x, y))| weighted_loss(forward(params, x, masks.map(|m| &m[i])), *y, weights))
        .sum();
    total / batch.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w: Vec<f64>,
    pub b: f64,
}

/// Exact gradient of [`batch_loss`] with respect to `(w, b)` under fixed
/// masks (away from the probability clamp).
pub fn gradients(
    params: &FusionParams,
    batch: &[(&[f64], bool)],
    masks: Option<&[DropoutMask]>,
    weights: ClassWeights,
) -> Gradient {
    assert!(!batch.is_empty(), "gradient of an empty batch");
    let mut g = Gradient { w: vec![0.0; params.dim()], b: 0.0 };
    for (i, (x, y)) in batch.iter().enumerate() {
        let mask = masks.map(|m| &m[i]);
        let p = forward(params, x, mask);
        let d = loss_grad_logit(p, *y, weights);
        g.b += d;
        match mask {
            None => g.w.iter_mut().zip(x.iter()).for_each(|(gw, v)| *gw += d * v),
            Some(m) => {
                let ds = d * m.scale;
                for ((gw, v), &k) in g.w.iter_mut().zip(x.iter()).zip(&m.keep) {
                    if k {
                        *gw += ds * v;
                    }
                }
            }
        }
    }
    let n = batch.len() as f64;
    g.w.iter_mut().for_each(|v| *v /= n);
    g.b /= n;
    g
}

fn adam_update(theta: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, c1: f64, c2: f64) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *theta -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut FusionParams, grad: &Gradient, learning_rate: f64) {
    let st = &mut params.adam;
    st.step += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(st.step as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(st.step as i32);
    for i in 0..params.w.len() {
        adam_update(&mut params.w[i], &mut st.m_w[i], &mut st.v_w[i], grad.w[i], learning_rate, c1, c2);
    }
    adam_update(&mut params.b, &mut st.m_b, &mut st.v_b, grad.b, learning_rate, c1, c2);
}

/// A trained head together with the configuration it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub config: FusionConfig,
    pub params: FusionParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub flag: bool,
}

impl FusionModel {
    pub fn score_vector(&self, x: &[f64]) -> f64 {
        forward(&self.params, x, None)
    }

    pub fn score(&self, bundle: &FeatureBundle) -> Result<f64, FeatureError> {
        Ok(self.score_vector(&bundle.select(&self.config.dims)?))
    }

    /// Evaluation-mode score, flagged when `score >= threshold`.
    pub fn predict(&self, bundle: &FeatureBundle, threshold: f64) -> Result<Prediction, FeatureError> {
        let score = self.score(bundle)?;
        Ok(Prediction { score, flag: score >= threshold })
    }
}
