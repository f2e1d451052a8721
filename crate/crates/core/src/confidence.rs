//! Confident-learning label-quality scores computed from predicted class
//! probabilities. Lower is more suspicious.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scores::{ScoreEntry, ScoreTable};

/// Returned by [`confidence_weighted_entropy`] when the prediction has zero
/// entropy.
pub const MAX_SCORE: f64 = f64::MAX;

/// One example's observed label and predicted distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbRecord {
    pub id: u64,
    pub label: usize,
    pub probs: Vec<f64>,
}

impl ProbRecord {
    pub fn new(id: u64, label: usize, probs: Vec<f64>) -> Result<Self> {
        if label >= probs.len() {
            return Err(Error::arg(format!(
                "label {label} out of range for {} classes",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::arg("probabilities must be finite and non-negative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(ProbRecord { id, label, probs })
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Records for every row of a probability matrix.
    pub fn from_matrix(ids: &[u64], labels: &[usize], probs: &Array2<f64>) -> Result<Vec<Self>> {
        ids.iter()
            .zip(labels)
            .zip(probs.rows())
            .map(|((&id, &y), p)| ProbRecord::new(id, y, p.to_vec()))
            .collect()
    }
}

fn need_two_classes(r: &ProbRecord) -> Result<()> {
    if r.num_classes() < 2 {
        return Err(Error::arg("score needs at least two classes"));
    }
    Ok(())
}

/// `p[k]`.
pub fn self_confidence(r: &ProbRecord) -> f64 {
    r.probs[r.label]
}

/// `p[k] - max_{j != k} p[j]`.
pub fn normalized_margin(r: &ProbRecord) -> Result<f64> {
    need_two_classes(r)?;
    let rival = r
        .probs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != r.label)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(r.probs[r.label] - rival)
}

/// Entropy divided by `ln N`, with `0 ln 0 = 0`.
pub fn normalized_entropy(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    h / (p.len() as f64).ln()
}

/// Self-confidence divided by normalized entropy. A zero-entropy prediction
/// scores [`MAX_SCORE`].
pub fn confidence_weighted_entropy(r: &ProbRecord) -> Result<f64> {
    need_two_classes(r)?;
    let h = normalized_entropy(&r.probs);
    if h <= 0.0 {
        return Ok(MAX_SCORE);
    }
    Ok((self_confidence(r) / h).min(MAX_SCORE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceMethod {
    SelfConfidence,
    NormalizedMargin,
    ConfidenceWeightedEntropy,
}

impl ConfidenceMethod {
    pub fn name(self) -> &'static str {
        match self {
            ConfidenceMethod::SelfConfidence => "sc",
            ConfidenceMethod::NormalizedMargin => "nm",
            ConfidenceMethod::ConfidenceWeightedEntropy => "ce",
        }
    }

    pub fn score(self, r: &ProbRecord) -> Result<f64> {
        match self {
            ConfidenceMethod::SelfConfidence => Ok(self_confidence(r)),
            ConfidenceMethod::NormalizedMargin => normalized_margin(r),
            ConfidenceMethod::ConfidenceWeightedEntropy => confidence_weighted_entropy(r),
        }
    }
}

pub fn score_table(method: ConfidenceMethod, records: &[ProbRecord]) -> Result<ScoreTable> {
    let entries = records
        .par_iter()
        .map(|r| method.score(r).map(|score| ScoreEntry { id: r.id, score }))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable::new(method.name(), entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(label: usize, p: &[f64]) -> ProbRecord {
        ProbRecord::new(0, label, p.to_vec()).unwrap()
    }

    #[test]
    fn self_confidence_examples() {
        assert!((self_confidence(&rec(0, &[0.7, 0.2, 0.1])) - 0.7).abs() < 1e-9);
        for k in 0..4 {
            assert!((self_confidence(&rec(k, &[0.25; 4])) - 0.25).abs() < 1e-9);
        }
        assert_eq!(self_confidence(&rec(1, &[0.0, 1.0, 0.0])), 1.0);
    }

    #[test]
    fn normalized_margin_examples() {
        assert!((normalized_margin(&rec(0, &[0.7, 0.2, 0.1])).unwrap() - 0.5).abs() < 1e-9);
        assert!((normalized_margin(&rec(0, &[0.2, 0.7, 0.1])).unwrap() + 0.5).abs() < 1e-9);
        assert_eq!(normalized_margin(&rec(2, &[0.0, 0.0, 1.0])).unwrap(), 1.0);
        assert!(matches!(normalized_margin(&rec(0, &[1.0])), Err(Error::Argument(_))));
    }

    #[test]
    fn entropy_weighted_examples() {
        for n in 2..6 {
            let p = vec![1.0 / n as f64; n];
            let got = confidence_weighted_entropy(&rec(1, &p)).unwrap();
            assert!((got - 1.0 / n as f64).abs() < 1e-9);
        }
        // H = -(0.7 ln .7 + .2 ln .2 + .1 ln .1) / ln 3
        let h = -(0.7f64 * 0.7f64.ln() + 0.2 * 0.2f64.ln() + 0.1 * 0.1f64.ln()) / 3f64.ln();
        assert!((h - 0.72985).abs() < 1e-5);
        let got = confidence_weighted_entropy(&rec(0, &[0.7, 0.2, 0.1])).unwrap();
        assert!((got - 0.7 / h).abs() < 1e-9);
        assert!((got - 0.9591).abs() < 1e-4);
        assert_eq!(confidence_weighted_entropy(&rec(0, &[1.0, 0.0])).unwrap(), MAX_SCORE);
        assert!(confidence_weighted_entropy(&rec(0, &[1.0])).is_err());
    }

    #[test]
    fn invalid_records() {
        assert!(ProbRecord::new(0, 3, vec![0.5, 0.5]).is_err());
        assert!(ProbRecord::new(0, 0, vec![0.5, 0.6]).is_err());
        assert!(ProbRecord::new(0, 0, vec![-0.1, 1.1]).is_err());
    }

    fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.001f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn ranges_hold(p in distribution(5), k in 0usize..5) {
            let r = ProbRecord::new(0, k, p.clone()).unwrap();
            let sc = self_confidence(&r);
            prop_assert!((0.0..=1.0).contains(&sc));
            let nm = normalized_margin(&r).unwrap();
            prop_assert!((-1.0..=1.0).contains(&nm));
            let h = normalized_entropy(&p);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&h));
        }

        #[test]
        fn invariant_under_permuting_other_classes(p in distribution(5), k in 0usize..5, rot in 1usize..4) {
            let others: Vec<usize> = (0..5).filter(|&j| j != k).collect();
            let mut q = p.clone();
            for (i, &j) in others.iter().enumerate() {
                q[others[(i + rot) % others.len()]] = p[j];
            }
            let a = ProbRecord::new(0, k, p).unwrap();
            let b = ProbRecord::new(0, k, q).unwrap();
            for m in [ConfidenceMethod::SelfConfidence, ConfidenceMethod::NormalizedMargin, ConfidenceMethod::ConfidenceWeightedEntropy] {
                prop_assert!((m.score(&a).unwrap() - m.score(&b).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn relabel_to_argmax_never_decreases(p in distribution(4), k in 0usize..4) {
            let top = (0..4).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
            let a = ProbRecord::new(0, k, p.clone()).unwrap();
            let b = ProbRecord::new(0, top, p).unwrap();
            for m in [ConfidenceMethod::SelfConfidence, ConfidenceMethod::NormalizedMargin, ConfidenceMethod::ConfidenceWeightedEntropy] {
                prop_assert!(m.score(&b).unwrap() >= m.score(&a).unwrap());
            }
        }
    }
}
