//! Mini-batch training with per-epoch snapshots.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{softmax, Encoder, ModelCheckpoint, ModelConfig, Optimizer};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Trainable tensors in a fixed order: encoder weights, encoder bias, head
/// weights, head bias. The encoder pair is empty when there is no hidden layer.
struct Params {
    tensors: [Array2<f64>; 4],
}

const ENC_W: usize = 0;
const ENC_B: usize = 1;
const HEAD_W: usize = 2;
const HEAD_B: usize = 3;

impl Params {
    fn zeros_like(other: &Params) -> Params {
        Params {
            tensors: std::array::from_fn(|i| Array2::zeros(other.tensors[i].raw_dim())),
        }
    }

    fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(0.0);
        }
    }
}

fn init_params(d: usize, h: usize, classes: usize, seed: u64) -> Params {
    let mut rng = rng::stream(seed, Stream::Init, 0);
    let mut glorot = |rows: usize, cols: usize| {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
    };
    if h == 0 {
        Params {
            tensors: [
                Array2::zeros((0, d)),
                Array2::zeros((0, 1)),
                Array2::zeros((classes, d)),
                Array2::zeros((classes, 1)),
            ],
        }
    } else {
        let enc = glorot(h, d);
        let head = glorot(classes, h);
        Params {
            tensors: [enc, Array2::zeros((h, 1)), head, Array2::zeros((classes, 1))],
        }
    }
}

fn snapshot(p: &Params, cfg: &ModelConfig, epoch: usize, lr: f64, val_accuracy: f64) -> ModelCheckpoint {
    let column = |t: &Array2<f64>| t.column(0).to_owned();
    ModelCheckpoint {
        encoder: (cfg.hidden > 0).then(|| Encoder {
            weights: p.tensors[ENC_W].clone(),
            bias: column(&p.tensors[ENC_B]),
            activation: cfg.activation,
        }),
        head_weights: p.tensors[HEAD_W].clone(),
        head_bias: column(&p.tensors[HEAD_B]),
        epoch,
        learning_rate: lr,
        val_accuracy,
    }
}

/// Accumulate the summed cross-entropy gradient of one example into `grad`.
/// Returns the example's loss.
fn accumulate(p: &Params, hidden: bool, cfg: &ModelConfig, x: ArrayView1<f64>, y: usize, grad: &mut Params) -> f64 {
    let phi: Array1<f64> = if hidden {
        let mut a = p.tensors[ENC_W].dot(&x) + &p.tensors[ENC_B].column(0);
        a.mapv_inplace(|v| cfg.activation.apply(v));
        a
    } else {
        x.to_owned()
    };
    let u = p.tensors[HEAD_W].dot(&phi) + &p.tensors[HEAD_B].column(0);
    let mut r = softmax(u.view());
    let loss = -r[y].max(f64::MIN_POSITIVE).ln();
    r[y] -= 1.0;

    let [g_enc_w, g_enc_b, g_head_w, g_head_b] = &mut grad.tensors;
    for (c, &rc) in r.iter().enumerate() {
        g_head_w.row_mut(c).scaled_add(rc, &phi);
        g_head_b[(c, 0)] += rc;
    }
    if hidden {
        let mut delta = p.tensors[HEAD_W].t().dot(&r);
        Zip::from(&mut delta)
            .and(&phi)
            .for_each(|dl, &a| *dl *= cfg.activation.derivative_from_output(a));
        for (j, &dj) in delta.iter().enumerate() {
            g_enc_w.row_mut(j).scaled_add(dj, &x);
            g_enc_b[(j, 0)] += dj;
        }
    }
    loss
}

/// Train on `d`, selecting by accuracy on `val`. Returns one checkpoint per
/// epoch in order.
pub fn train(d: &Dataset, val: &Dataset, cfg: &ModelConfig) -> Result<Vec<ModelCheckpoint>> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::arg("cannot train on an empty dataset"));
    }
    if d.dim() != val.dim() || d.num_classes() != val.num_classes() {
        return Err(Error::arg(format!(
            "training set is {}-dim/{} classes, validation set {}-dim/{} classes",
            d.dim(),
            d.num_classes(),
            val.dim(),
            val.num_classes()
        )));
    }
    let hidden = cfg.hidden > 0;
    let mut params = init_params(d.dim(), cfg.hidden, d.num_classes(), cfg.seed);
    let mut grad = Params::zeros_like(&params);
    let mut m1 = Params::zeros_like(&params);
    let mut m2 = Params::zeros_like(&params);
    let mut step = 0i32;

    let mut order: Vec<usize> = (0..d.len()).collect();
    let mut checkpoints = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate.at(epoch);
        let mut rng = rng::stream(cfg.seed, Stream::Shuffle, epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill_zero();
            for &i in batch {
                epoch_loss += accumulate(&params, hidden, cfg, d.row(i), d.labels()[i], &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            step += 1;
            for (k, ((w, g), (a, b))) in params
                .tensors
                .iter_mut()
                .zip(&grad.tensors)
                .zip(m1.tensors.iter_mut().zip(m2.tensors.iter_mut()))
                .enumerate()
            {
                let decay = if k == ENC_W || k == HEAD_W {
                    cfg.weight_decay
                } else {
                    0.0
                };
                match cfg.optimizer {
                    Optimizer::Sgd => Zip::from(w).and(g).for_each(|w, &g| {
                        *w -= lr * (g * scale + decay * *w);
                    }),
                    Optimizer::AdamW => {
                        let c1 = 1.0 - cfg.beta1.powi(step);
                        let c2 = 1.0 - cfg.beta2.powi(step);
                        Zip::from(w).and(g).and(a).and(b).for_each(|w, &g, a, b| {
                            let g = g * scale;
                            *a = cfg.beta1 * *a + (1.0 - cfg.beta1) * g;
                            *b = cfg.beta2 * *b + (1.0 - cfg.beta2) * g * g;
                            *w -= lr * decay * *w;
                            *w -= lr * (*a / c1) / ((*b / c2).sqrt() + 1e-8);
                        });
                    }
                }
            }
        }
        if !epoch_loss.is_finite() || params.tensors.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Divergence {
                epoch,
                message: format!("training loss {epoch_loss}"),
            });
        }
        let mut ckpt = snapshot(&params, cfg, epoch, lr, 0.0);
        ckpt.val_accuracy = if val.is_empty() { 0.0 } else { ckpt.accuracy(val)? };
        checkpoints.push(ckpt);
    }
    Ok(checkpoints)
}

/// Index of the checkpoint with the highest validation accuracy; the earliest
/// epoch wins ties.
pub fn best_index(checkpoints: &[ModelCheckpoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in checkpoints.iter().enumerate() {
        if best.is_none_or(|b| c.val_accuracy > checkpoints[b].val_accuracy) {
            best = Some(i);
        }
    }
    best
}

pub fn best_checkpoint(checkpoints: &[ModelCheckpoint]) -> Option<&ModelCheckpoint> {
    best_index(checkpoints).map(|i| &checkpoints[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthSpec};
    use crate::model::{Activation, LrSchedule};

    fn data(seed: u64) -> Dataset {
        generate_synthetic(&SynthSpec {
            num_classes: 3,
            dim: 4,
            per_class: 40,
            separation: 3.0,
            std: 1.0,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn one_epoch_one_checkpoint() {
        let d = data(1);
        let cfg = ModelConfig {
            epochs: 1,
            ..Default::default()
        };
        let ck = train(&d, &d, &cfg).unwrap();
        assert_eq!(ck.len(), 1);
        assert_eq!(ck[0].epoch, 1);
    }

    #[test]
    fn deterministic_given_seed() {
        let d = data(2);
        let cfg = ModelConfig {
            hidden: 6,
            epochs: 3,
            ..Default::default()
        };
        assert_eq!(train(&d, &d, &cfg).unwrap(), train(&d, &d, &cfg).unwrap());
        let other = ModelConfig {
            seed: 99,
            ..cfg.clone()
        };
        assert_ne!(train(&d, &d, &cfg).unwrap(), train(&d, &d, &other).unwrap());
    }

    #[test]
    fn per_epoch_rates_recorded() {
        let d = data(3);
        let cfg = ModelConfig {
            epochs: 3,
            learning_rate: LrSchedule::PerEpoch(vec![0.1, 0.05, 0.01]),
            ..Default::default()
        };
        let ck = train(&d, &d, &cfg).unwrap();
        let rates: Vec<f64> = ck.iter().map(|c| c.learning_rate).collect();
        assert_eq!(rates, vec![0.1, 0.05, 0.01]);
    }

    #[test]
    fn rejects_bad_config() {
        let d = data(4);
        for cfg in [
            ModelConfig {
                epochs: 0,
                ..Default::default()
            },
            ModelConfig {
                batch_size: 0,
                ..Default::default()
            },
            ModelConfig {
                learning_rate: LrSchedule::Constant(0.0),
                ..Default::default()
            },
        ] {
            assert!(matches!(train(&d, &d, &cfg), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn divergence_reports_epoch() {
        let d = data(5).with_features(data(5).features() * 1e150).unwrap();
        let cfg = ModelConfig {
            hidden: 0,
            optimizer: Optimizer::Sgd,
            learning_rate: LrSchedule::Constant(1e160),
            epochs: 2,
            ..Default::default()
        };
        match train(&d, &d, &cfg) {
            Err(Error::Divergence { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn best_prefers_earliest_tie() {
        let d = data(6);
        let cfg = ModelConfig {
            epochs: 3,
            ..Default::default()
        };
        let mut ck = train(&d, &d, &cfg).unwrap();
        ck[0].val_accuracy = 0.9;
        ck[1].val_accuracy = 0.95;
        ck[2].val_accuracy = 0.95;
        assert_eq!(best_index(&ck), Some(1));
    }

    #[test]
    fn relu_hidden_layer_trains() {
        let d = data(7);
        let cfg = ModelConfig {
            hidden: 8,
            activation: Activation::Relu,
            learning_rate: LrSchedule::Constant(1e-2),
            ..Default::default()
        };
        let ck = train(&d, &d, &cfg).unwrap();
        assert!(best_checkpoint(&ck).unwrap().val_accuracy > 0.8);
    }
}
