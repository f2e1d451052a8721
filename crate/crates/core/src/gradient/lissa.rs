//! Inverse Hessian-vector products by the LiSSA recursion.
//!
//! With damped Hessian `A = H + damping * I` and scale `s`, the recursion
//! `x_0 = v`, `x_j = v + x_{j-1} - A x_{j-1} / s` converges to `s A^{-1} v`
//! whenever every eigenvalue of `A / s` lies in `(0, 2)`. `depth` counts the
//! terms `x_0 .. x_{depth-1}`; the estimate is `x_{depth-1} / s`, averaged over
//! `repeats` independently seeded runs.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Iterates whose norm exceeds this multiple of `|v|` count as divergence.
const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LissaConfig {
    pub damping: f64,
    /// `None` picks 1.1x the power-iteration estimate of the damped
    /// Hessian's top eigenvalue.
    pub scale: Option<f64>,
    pub depth: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for LissaConfig {
    fn default() -> Self {
        LissaConfig {
            damping: 0.01,
            scale: None,
            depth: 1000,
            repeats: 1,
            seed: 0,
        }
    }
}

/// A (possibly sampled) Hessian-vector product.
pub trait HessianOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64>;
}

/// An explicit symmetric matrix.
pub struct DenseHessian(pub Array2<f64>);

impl HessianOperator for DenseHessian {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, v: &[f64], _rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.0.dot(&ArrayView1::from(v)).to_vec()
    }
}

/// Mean cross-entropy Hessian w.r.t. the `N x h` head weights (bias
/// excluded), `mean_i (diag(p_i) - p_i p_i^T) ⊗ phi_i phi_i^T`. Exact for a
/// linear head, since the logits are linear in the weights.
///
/// With `sample = Some(b)` each product averages a fresh random batch of `b`
/// examples instead of the whole set.
pub struct LastLayerHessian {
    probs: Array2<f64>,
    features: Array2<f64>,
    sample: Option<usize>,
}

impl LastLayerHessian {
    pub fn new(probs: Array2<f64>, features: Array2<f64>, sample: Option<usize>) -> Result<Self> {
        if probs.nrows() != features.nrows() || probs.nrows() == 0 {
            return Err(Error::arg(
                "Hessian needs matching, non-empty probability and feature rows",
            ));
        }
        if sample == Some(0) {
            return Err(Error::arg("Hessian sample size must be positive"));
        }
        Ok(LastLayerHessian {
            probs,
            features,
            sample,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    fn accumulate(&self, v: &Array2<f64>, i: usize, out: &mut Array2<f64>) {
        let phi = self.features.row(i);
        let p = self.probs.row(i);
        let u = v.dot(&phi);
        let pu = p.dot(&u);
        let ju: Array1<f64> = &p * &(u - pu);
        for (c, &jc) in ju.iter().enumerate() {
            out.row_mut(c).scaled_add(jc, &phi);
        }
    }

    /// The explicit `(N h) x (N h)` matrix, for small problems and tests.
    pub fn dense(&self) -> Array2<f64> {
        let (classes, h) = (self.num_classes(), self.feature_dim());
        let dim = classes * h;
        let mut out = Array2::zeros((dim, dim));
        for i in 0..self.probs.nrows() {
            let p = self.probs.row(i);
            let phi = self.features.row(i);
            for a in 0..classes {
                for b in 0..classes {
                    let j = if a == b { p[a] - p[a] * p[b] } else { -p[a] * p[b] };
                    for x in 0..h {
                        for y in 0..h {
                            out[(a * h + x, b * h + y)] += j * phi[x] * phi[y];
                        }
                    }
                }
            }
        }
        out / self.probs.nrows() as f64
    }
}

impl HessianOperator for LastLayerHessian {
    fn dim(&self) -> usize {
        self.num_classes() * self.feature_dim()
    }

    fn apply(&self, v: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let v = ArrayView1::from(v)
            .into_shape_with_order((self.num_classes(), self.feature_dim()))
            .expect("vector length matches Hessian")
            .to_owned();
        let mut out = Array2::zeros(v.raw_dim());
        let n = self.probs.nrows();
        let count = match self.sample {
            Some(b) if b < n => {
                for i in index::sample(rng, n, b) {
                    self.accumulate(&v, i, &mut out);
                }
                b
            }
            _ => {
                for i in 0..n {
                    self.accumulate(&v, i, &mut out);
                }
                n
            }
        };
        (out / count as f64).into_iter().collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Power-iteration estimate of the top eigenvalue of `H + damping I`.
pub fn estimate_top_eigenvalue<H: HessianOperator + ?Sized>(h: &H, damping: f64, seed: u64) -> f64 {
    use rand::Rng;
    let mut rng = rng::stream(seed, Stream::Lissa, u32::MAX as u64);
    let mut v: Vec<f64> = (0..h.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut lambda = 0.0;
    for _ in 0..50 {
        let nv = norm(&v);
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let hv = h.apply(&v, &mut rng);
        lambda = hv.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        v = hv;
    }
    lambda.max(0.0) + damping
}

/// Approximate `(H + damping I)^{-1} v`.
pub fn lissa_hvp_inverse<H: HessianOperator + ?Sized>(v: &[f64], cfg: &LissaConfig, hvp: &H) -> Result<Vec<f64>> {
    if cfg.depth == 0 || cfg.repeats == 0 {
        return Err(Error::arg("LiSSA depth and repeats must be at least 1"));
    }
    if !(cfg.damping >= 0.0) {
        return Err(Error::arg("LiSSA damping must be non-negative"));
    }
    if v.len() != hvp.dim() {
        return Err(Error::arg(format!(
            "vector has length {}, Hessian acts on {}",
            v.len(),
            hvp.dim()
        )));
    }
    let scale = match cfg.scale {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::arg(format!("LiSSA scale {s} must be positive"))),
        None => 1.1 * estimate_top_eigenvalue(hvp, cfg.damping, cfg.seed),
    };
    if !(scale > 0.0) {
        return Err(Error::Solver("damped Hessian has no positive spectrum".into()));
    }
    let limit = DIVERGENCE_FACTOR * norm(v).max(f64::MIN_POSITIVE);
    let mut total = vec![0.0; v.len()];
    for repeat in 0..cfg.repeats {
        let mut rng = rng::stream(cfg.seed, Stream::Lissa, repeat as u64);
        let mut x = v.to_vec();
        for step in 1..cfg.depth {
            let hx = hvp.apply(&x, &mut rng);
            for ((xi, &vi), &hi) in x.iter_mut().zip(v).zip(&hx) {
                *xi = vi + *xi - (hi + cfg.damping * *xi) / scale;
            }
            let nx = norm(&x);
            if !nx.is_finite() || nx > limit {
                return Err(Error::Solver(format!(
                    "LiSSA diverged at step {step} (iterate norm {nx:e}); increase the scale"
                )));
            }
        }
        for (t, xi) in total.iter_mut().zip(&x) {
            *t += xi / scale;
        }
    }
    let k = cfg.repeats as f64;
    Ok(total.into_iter().map(|t| t / k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    struct Zero(usize);

    impl HessianOperator for Zero {
        fn dim(&self) -> usize {
            self.0
        }
        fn apply(&self, v: &[f64], _: &mut ChaCha8Rng) -> Vec<f64> {
            vec![0.0; v.len()]
        }
    }

    #[test]
    fn identity_case() {
        let cfg = LissaConfig {
            damping: 1.0,
            scale: Some(2.0),
            depth: 60,
            repeats: 2,
            seed: 1,
        };
        let v = vec![0.5, -2.0, 3.0];
        let out = lissa_hvp_inverse(&v, &cfg, &Zero(3)).unwrap();
        for (a, b) in out.iter().zip(&v) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn depth_one_is_v_over_scale() {
        let cfg = LissaConfig {
            damping: 0.3,
            scale: Some(4.0),
            depth: 1,
            repeats: 1,
            seed: 0,
        };
        let h = DenseHessian(array![[2.0, 0.5], [0.5, 1.0]]);
        let out = lissa_hvp_inverse(&[1.0, -3.0], &cfg, &h).unwrap();
        assert_eq!(out, vec![0.25, -0.75]);
    }

    #[test]
    fn divergence_detected() {
        let cfg = LissaConfig {
            damping: 0.0,
            scale: Some(0.1),
            depth: 200,
            repeats: 1,
            seed: 0,
        };
        let h = DenseHessian(array![[5.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(
            lissa_hvp_inverse(&[1.0, 1.0], &cfg, &h),
            Err(Error::Solver(_))
        ));
    }

    #[test]
    fn auto_scale_converges() {
        let h = DenseHessian(array![[3.0, 1.0], [1.0, 2.0]]);
        let cfg = LissaConfig {
            damping: 0.0,
            depth: 400,
            ..Default::default()
        };
        let out = lissa_hvp_inverse(&[1.0, 0.0], &cfg, &h).unwrap();
        // inverse = [[2, -1], [-1, 3]] / 5
        assert!((out[0] - 0.4).abs() < 1e-9);
        assert!((out[1] + 0.2).abs() < 1e-9);
    }

    #[test]
    fn dense_matches_operator() {
        let probs = array![[0.6, 0.3, 0.1], [0.2, 0.2, 0.6]];
        let feats = array![[1.0, -0.5], [0.3, 2.0]];
        let h = LastLayerHessian::new(probs, feats, None).unwrap();
        let dense = h.dense();
        let v = vec![0.1, -0.2, 0.3, 0.7, -1.1, 0.4];
        let mut rng = rng::stream(0, Stream::Lissa, 0);
        let a = h.apply(&v, &mut rng);
        let b = dense.dot(&ArrayView1::from(&v[..]));
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        for i in 0..6 {
            for j in 0..6 {
                assert!((dense[(i, j)] - dense[(j, i)]).abs() < 1e-15);
            }
        }
    }
}
