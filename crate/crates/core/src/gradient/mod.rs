//! Last-layer gradient influence scores.
//!
//! For a softmax head `W` on penultimate feature `phi`, the cross-entropy
//! gradient w.r.t. `W` is the outer product `r phi^T` with residual
//! `r = softmax(W phi + b) - onehot(y)`. Gradients are kept in this factored
//! form: inner products become `<r_a, r_b> <phi_a, phi_b>` and sums over a
//! reference set collapse into a single `N x h` matrix.

mod lissa;
mod theory;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{softmax, ModelCheckpoint};
use crate::scores::{ScoreEntry, ScoreTable};

pub use lissa::{
    estimate_top_eigenvalue, lissa_hvp_inverse, DenseHessian, HessianOperator, LastLayerHessian, LissaConfig,
};
pub use theory::{empirical_g, theory_kernel_values, KernelValues};

/// Cross-entropy gradient w.r.t. the head weights, as `residual ⊗ feature`.
#[derive(Debug, Clone, PartialEq)]
pub struct LastLayerGradient {
    pub id: u64,
    pub residual: Array1<f64>,
    pub feature: Array1<f64>,
}

impl LastLayerGradient {
    /// Frobenius norm of the full gradient, `|r| |phi|`.
    pub fn norm(&self) -> f64 {
        self.residual.dot(&self.residual).sqrt() * self.feature.dot(&self.feature).sqrt()
    }

    /// Explicit `N x h` gradient matrix.
    pub fn matrix(&self) -> Array2<f64> {
        let r = self.residual.view().insert_axis(ndarray::Axis(1));
        let f = self.feature.view().insert_axis(ndarray::Axis(0));
        r.dot(&f)
    }

    /// Row-major flattening of [`Self::matrix`].
    pub fn flatten(&self) -> Vec<f64> {
        self.matrix().into_iter().collect()
    }

    /// `r^T M phi`, the inner product of this gradient with matrix `M`.
    pub fn inner_with(&self, m: &Array2<f64>) -> f64 {
        self.residual.dot(&m.dot(&self.feature))
    }

    pub fn scaled(&self, s: f64) -> Self {
        LastLayerGradient {
            id: self.id,
            residual: &self.residual * s,
            feature: self.feature.clone(),
        }
    }
}

/// Gradient of one example's loss at `model`.
pub fn last_layer_gradient(
    model: &ModelCheckpoint,
    id: u64,
    x: ArrayView1<f64>,
    label: usize,
) -> Result<LastLayerGradient> {
    if label >= model.num_classes() {
        return Err(Error::arg(format!(
            "label {label} out of range for {} classes",
            model.num_classes()
        )));
    }
    let feature = model.penultimate(x)?;
    let mut residual = softmax(model.logits_from_feature(feature.view()).view());
    residual[label] -= 1.0;
    Ok(LastLayerGradient { id, residual, feature })
}

/// Gradients for every example of `d` under its observed labels.
pub fn gradients_for(model: &ModelCheckpoint, d: &Dataset) -> Result<Vec<LastLayerGradient>> {
    (0..d.len())
        .into_par_iter()
        .map(|i| last_layer_gradient(model, d.ids()[i], d.row(i), d.labels()[i]))
        .collect()
}

/// Gradient dot product.
pub fn grad_dot(a: &LastLayerGradient, b: &LastLayerGradient) -> f64 {
    a.residual.dot(&b.residual) * a.feature.dot(&b.feature)
}

/// Gradient cosine.
pub fn grad_cos(a: &LastLayerGradient, b: &LastLayerGradient) -> Result<f64> {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Err(Error::UndefinedScore(format!(
            "zero gradient for id {}",
            if a.norm() == 0.0 { a.id } else { b.id }
        )));
    }
    Ok((grad_dot(a, b) / denom).clamp(-1.0, 1.0))
}

/// Learning-rate weighted sum of per-checkpoint dot products.
pub fn tracin(a: &[LastLayerGradient], b: &[LastLayerGradient], learning_rates: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != learning_rates.len() || a.is_empty() {
        return Err(Error::arg(format!(
            "TracIn needs matching checkpoint lists, got {}, {} and {} rates",
            a.len(),
            b.len(),
            learning_rates.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .zip(learning_rates)
        .map(|((ga, gb), lr)| lr * grad_dot(ga, gb))
        .sum())
}

/// Applies an inverse Hessian to an `N x h` matrix.
pub trait InverseHessian: Sync {
    fn solve(&self, v: &Array2<f64>) -> Result<Array2<f64>>;
}

/// `H = I`.
pub struct IdentityInverse;

impl InverseHessian for IdentityInverse {
    fn solve(&self, v: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(v.clone())
    }
}

/// LiSSA against a Hessian operator.
pub struct LissaInverse<'a, H: HessianOperator> {
    pub hessian: &'a H,
    pub config: LissaConfig,
}

impl<H: HessianOperator> InverseHessian for LissaInverse<'_, H> {
    fn solve(&self, v: &Array2<f64>) -> Result<Array2<f64>> {
        let flat: Vec<f64> = v.iter().copied().collect();
        let out = lissa_hvp_inverse(&flat, &self.config, self.hessian)?;
        Ok(Array2::from_shape_vec(v.raw_dim(), out).expect("same length"))
    }
}

/// `-(1/n) g_a^T H^{-1} g_b`.
pub fn influence_function(
    a: &LastLayerGradient,
    b: &LastLayerGradient,
    inverse: &dyn InverseHessian,
    train_size: usize,
) -> Result<f64> {
    if train_size == 0 {
        return Err(Error::arg("training size must be positive"));
    }
    let hinv_b = inverse.solve(&b.matrix())?;
    Ok(-a.inner_with(&hinv_b) / train_size as f64)
}

/// Pairwise influence methods aggregated over a reference set.
pub enum PairwiseMethod<'a> {
    Dot,
    Cosine,
    Influence {
        inverse: &'a dyn InverseHessian,
        train_size: usize,
    },
}

impl PairwiseMethod<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            PairwiseMethod::Dot => "gd",
            PairwiseMethod::Cosine => "gc",
            PairwiseMethod::Influence { .. } => "if",
        }
    }
}

fn gradient_sum<'a>(grads: impl Iterator<Item = &'a LastLayerGradient>, normalize: bool) -> Option<Array2<f64>> {
    let mut sum: Option<Array2<f64>> = None;
    for g in grads {
        let w = if normalize {
            let norm = g.norm();
            if norm == 0.0 {
                log::warn!("skipping reference id {} with zero gradient", g.id);
                continue;
            }
            1.0 / norm
        } else {
            1.0
        };
        let m = g.matrix() * w;
        match &mut sum {
            Some(s) => *s += &m,
            None => sum = Some(m),
        }
    }
    sum
}

/// `score(i) = sum_j method(i, j)` over the reference set; more negative is
/// more suspicious.
pub fn aggregate_influence(
    train: &[LastLayerGradient],
    reference: &[LastLayerGradient],
    method: PairwiseMethod<'_>,
) -> Result<ScoreTable> {
    if reference.is_empty() {
        return Err(Error::arg("reference set is empty"));
    }
    let normalize = matches!(method, PairwiseMethod::Cosine);
    let shape = reference[0].matrix().raw_dim();
    let sum = gradient_sum(reference.iter(), normalize).unwrap_or_else(|| Array2::zeros(shape));
    let target = match &method {
        PairwiseMethod::Influence { inverse, train_size } => {
            if *train_size == 0 {
                return Err(Error::arg("training size must be positive"));
            }
            inverse.solve(&sum)? * (-1.0 / *train_size as f64)
        }
        _ => sum,
    };
    let entries = train
        .par_iter()
        .map(|g| {
            let raw = g.inner_with(&target);
            let score = if normalize {
                let norm = g.norm();
                if norm == 0.0 {
                    log::warn!("id {} has zero gradient; cosine score set to 0", g.id);
                    0.0
                } else {
                    raw / norm
                }
            } else {
                raw
            };
            ScoreEntry { id: g.id, score }
        })
        .collect();
    Ok(ScoreTable::new(method.name(), entries))
}

/// TracIn aggregated over a reference set. `train[t]` and `reference[t]` hold
/// the gradients at checkpoint `t`, trained with `learning_rates[t]`.
pub fn aggregate_tracin(
    train: &[Vec<LastLayerGradient>],
    reference: &[Vec<LastLayerGradient>],
    learning_rates: &[f64],
) -> Result<ScoreTable> {
    if train.len() != reference.len() || train.len() != learning_rates.len() || train.is_empty() {
        return Err(Error::arg("TracIn needs one gradient set and rate per checkpoint"));
    }
    if reference.iter().any(|r| r.is_empty()) {
        return Err(Error::arg("reference set is empty"));
    }
    let n = train[0].len();
    if train.iter().any(|t| t.len() != n) {
        return Err(Error::arg("training gradient sets differ in size across checkpoints"));
    }
    let targets: Vec<Array2<f64>> = reference
        .iter()
        .zip(learning_rates)
        .map(|(r, lr)| gradient_sum(r.iter(), false).expect("non-empty") * *lr)
        .collect();
    let entries = (0..n)
        .into_par_iter()
        .map(|i| {
            let score = train
                .iter()
                .zip(&targets)
                .map(|(epoch, t)| epoch[i].inner_with(t))
                .sum();
            ScoreEntry {
                id: train[0][i].id,
                score,
            }
        })
        .collect();
    Ok(ScoreTable::new("tracin", entries))
}
