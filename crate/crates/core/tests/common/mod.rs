#![allow(dead_code)]

use label_audit::model::Encoder;
use label_audit::{Activation, Dataset, ModelCheckpoint};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| rng.random_range(-scale..scale))
}

/// Random weights; `hidden == 0` gives plain softmax regression.
pub fn random_model(
    rng: &mut ChaCha8Rng,
    dim: usize,
    hidden: usize,
    classes: usize,
    activation: Activation,
) -> ModelCheckpoint {
    let encoder = (hidden > 0).then(|| Encoder {
        weights: uniform_matrix(rng, hidden, dim, 1.0),
        bias: uniform_vector(rng, hidden, 0.5),
        activation,
    });
    let h_eff = if hidden > 0 { hidden } else { dim };
    ModelCheckpoint {
        encoder,
        head_weights: uniform_matrix(rng, classes, h_eff, 1.0),
        head_bias: uniform_vector(rng, classes, 0.5),
        epoch: 1,
        learning_rate: 0.1,
        val_accuracy: 0.0,
    }
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> Dataset {
    let features = uniform_matrix(rng, n, dim, 2.0);
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Dataset::with_sequential_ids(features, labels, None, classes).unwrap()
}
