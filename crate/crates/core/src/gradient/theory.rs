//! Closed forms for the softmax-residual kernel between two examples.
//!
//! For a confident model (`p_k = alpha` on the labelled class, `eps =
//! (1 - alpha)/(N - 1)` elsewhere) the residual dot product is
//! `(1-alpha)^2 + eps^2 (N-1)` for a same-label pair and `-eps^2 N` for a
//! different-label pair, so their magnitudes differ by a factor of exactly
//! `N - 1`.

use serde::{Deserialize, Serialize};

use crate::confidence::ProbRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValues {
    pub same: f64,
    pub different: f64,
    pub ratio: f64,
}

pub fn theory_kernel_values(alpha: f64, num_classes: usize) -> Result<KernelValues> {
    if num_classes < 2 {
        return Err(Error::arg("kernel values need at least two classes"));
    }
    let n = num_classes as f64;
    if !(alpha >= 1.0 / n && alpha < 1.0) {
        return Err(Error::arg(format!("alpha {alpha} not in [1/{num_classes}, 1)")));
    }
    let eps = (1.0 - alpha) / (n - 1.0);
    let same = (1.0 - alpha).powi(2) + eps * eps * (n - 1.0);
    let different = -eps * eps * n;
    Ok(KernelValues {
        same,
        different,
        ratio: same.abs() / different.abs(),
    })
}

/// `<p_a - e_{k_a}, p_b - e_{k_b}>` for two labelled predictions.
pub fn empirical_g(a: &ProbRecord, b: &ProbRecord) -> Result<f64> {
    if a.num_classes() != b.num_classes() {
        return Err(Error::arg("records have different class counts"));
    }
    Ok(a.probs
        .iter()
        .zip(&b.probs)
        .enumerate()
        .map(|(c, (&pa, &pb))| {
            let ra = pa - if c == a.label { 1.0 } else { 0.0 };
            let rb = pb - if c == b.label { 1.0 } else { 0.0 };
            ra * rb
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values_n8() {
        let kv = theory_kernel_values(0.93, 8).unwrap();
        assert!((kv.same - 0.0056).abs() < 1e-12);
        assert!((kv.different + 0.0008).abs() < 1e-12);
        assert!((kv.ratio - 7.0).abs() < 1e-12);
    }

    #[test]
    fn binary_ratio_is_one() {
        let kv = theory_kernel_values(0.8, 2).unwrap();
        assert!((kv.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_bounds() {
        assert!(theory_kernel_values(0.1, 8).is_err());
        assert!(theory_kernel_values(0.5, 2).is_ok());
        assert!(theory_kernel_values(1.0, 8).is_err());
        assert!(theory_kernel_values(0.9, 1).is_err());
    }

    #[test]
    fn one_hot_pair_is_zero() {
        let a = ProbRecord::new(0, 1, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(empirical_g(&a, &a).unwrap(), 0.0);
    }
}
