//! A one-hidden-layer softmax classifier (or plain softmax regression when the
//! hidden width is zero), its per-epoch checkpoints, and the forward passes
//! every scorer builds on.

mod checkpoint_io;
mod train;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub use checkpoint_io::{checkpoint_file_name, load_checkpoint_dir, read_checkpoint, write_checkpoint};
pub use train::{best_checkpoint, best_index, train};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Adam with decoupled weight decay.
    AdamW,
    /// Plain stochastic gradient descent.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LrSchedule {
    Constant(f64),
    PerEpoch(Vec<f64>),
}

impl LrSchedule {
    /// Learning rate for 1-based `epoch`.
    pub fn at(&self, epoch: usize) -> f64 {
        match self {
            LrSchedule::Constant(lr) => *lr,
            LrSchedule::PerEpoch(v) => v[epoch - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden width; 0 trains softmax regression on the raw inputs.
    pub hidden: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: LrSchedule,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 0,
            activation: Activation::Tanh,
            epochs: 15,
            batch_size: 32,
            learning_rate: LrSchedule::Constant(1e-3),
            weight_decay: 0.01,
            optimizer: Optimizer::AdamW,
            beta1: 0.9,
            beta2: 0.999,
            seed: 16,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::arg("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        match &self.learning_rate {
            LrSchedule::Constant(lr) if !(*lr > 0.0 && lr.is_finite()) => {
                return Err(Error::arg("learning rate must be positive"));
            }
            LrSchedule::PerEpoch(v) => {
                if v.len() != self.epochs {
                    return Err(Error::arg(format!(
                        "schedule has {} rates for {} epochs",
                        v.len(),
                        self.epochs
                    )));
                }
                if v.iter().any(|lr| !(*lr > 0.0 && lr.is_finite())) {
                    return Err(Error::arg("learning rates must be positive"));
                }
            }
            _ => {}
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::arg("weight decay must be non-negative"));
        }
        Ok(())
    }
}

/// Hidden layer: `phi = act(weights * x + bias)`, `weights` is `h x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Model parameters after one training epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub encoder: Option<Encoder>,
    /// Softmax head, `N x h_eff`.
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
    /// 1-based epoch index.
    pub epoch: usize,
    pub learning_rate: f64,
    pub val_accuracy: f64,
}

impl ModelCheckpoint {
    pub fn input_dim(&self) -> usize {
        match &self.encoder {
            Some(e) => e.weights.ncols(),
            None => self.head_weights.ncols(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.head_weights.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.head_weights.nrows()
    }

    fn check_input(&self, x: &ArrayView1<f64>) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::arg(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn feature_unchecked(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match &self.encoder {
            None => x.to_owned(),
            Some(enc) => {
                let mut pre = enc.weights.dot(&x) + &enc.bias;
                pre.mapv_inplace(|v| enc.activation.apply(v));
                pre
            }
        }
    }

    /// Penultimate feature of one input.
    pub fn penultimate(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(&x)?;
        Ok(self.feature_unchecked(x))
    }

    /// Penultimate features of every row.
    pub fn penultimate_batch(&self, xs: &Array2<f64>) -> Result<Array2<f64>> {
        if xs.ncols() != self.input_dim() {
            return Err(Error::arg(format!(
                "inputs have dimension {}, model expects {}",
                xs.ncols(),
                self.input_dim()
            )));
        }
        Ok(match &self.encoder {
            None => xs.clone(),
            Some(enc) => {
                let mut pre = xs.dot(&enc.weights.t()) + &enc.bias.view().insert_axis(Axis(0));
                pre.mapv_inplace(|v| enc.activation.apply(v));
                pre
            }
        })
    }

    /// The dataset with its features replaced by penultimate features.
    pub fn embed(&self, d: &Dataset) -> Result<Dataset> {
        d.with_features(self.penultimate_batch(d.features())?)
    }

    pub fn logits_from_feature(&self, phi: ArrayView1<f64>) -> Array1<f64> {
        self.head_weights.dot(&phi) + &self.head_bias
    }

    pub fn predict_proba(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let phi = self.penultimate(x)?;
        Ok(softmax(self.logits_from_feature(phi.view()).view()))
    }

    /// Class probabilities for every row, `n x N`.
    pub fn predict_proba_batch(&self, xs: &Array2<f64>) -> Result<Array2<f64>> {
        let phi = self.penultimate_batch(xs)?;
        let mut logits = phi.dot(&self.head_weights.t()) + &self.head_bias.view().insert_axis(Axis(0));
        for mut row in logits.rows_mut() {
            let p = softmax(row.view());
            row.assign(&p);
        }
        Ok(logits)
    }

    /// Cross-entropy of one example.
    pub fn example_loss(&self, x: ArrayView1<f64>, label: usize) -> Result<f64> {
        let phi = self.penultimate(x)?;
        let u = self.logits_from_feature(phi.view());
        Ok(log_sum_exp(u.view()) - u[label])
    }

    /// Mean cross-entropy over the dataset's observed labels.
    pub fn mean_loss(&self, d: &Dataset) -> Result<f64> {
        let probs = self.predict_proba_batch(d.features())?;
        let total: f64 = d
            .labels()
            .iter()
            .enumerate()
            .map(|(i, &y)| -probs[(i, y)].max(f64::MIN_POSITIVE).ln())
            .sum();
        Ok(total / d.len().max(1) as f64)
    }

    /// Fraction of rows whose argmax prediction equals the observed label.
    pub fn accuracy(&self, d: &Dataset) -> Result<f64> {
        if d.is_empty() {
            return Err(Error::UndefinedMetric("accuracy of an empty dataset".into()));
        }
        let probs = self.predict_proba_batch(d.features())?;
        let hits = probs
            .rows()
            .into_iter()
            .zip(d.labels())
            .filter(|(p, &y)| argmax(p.view()) == y)
            .count();
        Ok(hits as f64 / d.len() as f64)
    }
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn log_sum_exp(u: ArrayView1<f64>) -> f64 {
    let max = u.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    max + u.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax with max-subtraction.
pub fn softmax(u: ArrayView1<f64>) -> Array1<f64> {
    let max = u.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut e = u.mapv(|v| (v - max).exp());
    let s = e.sum();
    e /= s;
    e
}
