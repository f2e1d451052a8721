//! Metrics for comparing detectors against injected ground truth.
//!
//! Two conventions are fixed here because the metrics are otherwise
//! ambiguous:
//! - detection accuracy at `t` is the precision of the top `ceil(t * E)`
//!   ranked examples, `E` being the number of injected errors;
//! - error reduction rate is the relative drop in the count of labels that
//!   disagree with ground truth among surviving examples. Removing an
//!   erroneous example resolves it; removing a clean one changes nothing.

pub mod histogram;
pub mod report;
pub mod svg;

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::confidence::ProbRecord;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gradient::empirical_g;
use crate::model::{best_checkpoint, train, ModelCheckpoint, ModelConfig};
use crate::noise::NoiseReport;
use crate::rng::{self, Stream};
use crate::scores::ScoreTable;

pub use histogram::{norm_histograms, similarity_histograms, Histogram, HistogramPair, HISTOGRAM_BINS};

/// `t = 0.1, 0.2, ..., 1.0`.
pub fn default_t_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Precision of the first `ceil(t * E)` ids of `ranking`.
pub fn detection_accuracy(ranking: &[u64], noise: &NoiseReport, t: f64) -> Result<f64> {
    let errors = noise.len();
    if errors == 0 {
        return Err(Error::UndefinedMetric(
            "detection accuracy needs at least one injected error".into(),
        ));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::arg(format!("t = {t} not in (0, 1]")));
    }
    let size = ((t * errors as f64 - 1e-9).ceil() as usize).clamp(1, errors);
    if ranking.len() < size {
        return Err(Error::arg(format!(
            "ranking has {} ids, prefix of {size} requested",
            ranking.len()
        )));
    }
    let hits = ranking[..size].iter().filter(|&&id| noise.contains(id)).count();
    Ok(hits as f64 / size as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCurve {
    pub method: String,
    /// `(t, accuracy)` with strictly increasing `t`.
    pub points: Vec<(f64, f64)>,
}

pub fn detection_curve(method: &str, ranking: &[u64], noise: &NoiseReport, ts: &[f64]) -> Result<DetectionCurve> {
    if ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg("t grid must be strictly increasing"));
    }
    let points = ts
        .iter()
        .map(|&t| detection_accuracy(ranking, noise, t).map(|a| (t, a)))
        .collect::<Result<_>>()?;
    Ok(DetectionCurve {
        method: method.to_string(),
        points,
    })
}

/// Pointwise mean of curves over the same grid (e.g. over seeds).
pub fn mean_curve(method: &str, curves: &[DetectionCurve]) -> Result<DetectionCurve> {
    let first = curves.first().ok_or_else(|| Error::arg("no curves to average"))?;
    let mut points = first.points.clone();
    for c in &curves[1..] {
        if c.points.len() != points.len() {
            return Err(Error::arg("curves have different grids"));
        }
        for (p, q) in points.iter_mut().zip(&c.points) {
            p.1 += q.1;
        }
    }
    for p in &mut points {
        p.1 /= curves.len() as f64;
    }
    Ok(DetectionCurve {
        method: method.to_string(),
        points,
    })
}

/// A uniformly random permutation of `ids`.
pub fn random_ranking(ids: &[u64], seed: u64) -> Vec<u64> {
    let mut out = ids.to_vec();
    out.shuffle(&mut rng::stream(seed, Stream::Baseline, 0));
    out
}

/// `(E_before - E_after) / E_before`.
pub fn error_reduction_rate(before: &Dataset, after: &Dataset) -> Result<f64> {
    let e_before = before
        .label_error_count()
        .ok_or_else(|| Error::UndefinedMetric("dataset has no ground-truth labels".into()))?;
    let e_after = after
        .label_error_count()
        .ok_or_else(|| Error::UndefinedMetric("dataset has no ground-truth labels".into()))?;
    if e_before == 0 {
        return Err(Error::UndefinedMetric(
            "no label errors before cleaning; reduction rate undefined".into(),
        ));
    }
    let known: HashSet<u64> = before.ids().iter().copied().collect();
    if let Some(id) = after.ids().iter().find(|id| !known.contains(id)) {
        return Err(Error::arg(format!("cleaned dataset has unknown id {id}")));
    }
    Ok((e_before as f64 - e_after as f64) / e_before as f64)
}

/// Best-on-validation test accuracy of a model trained on `train_set`.
pub fn test_accuracy(train_set: &Dataset, val: &Dataset, test: &Dataset, cfg: &ModelConfig) -> Result<f64> {
    let ckpts = train(train_set, val, cfg)?;
    best_checkpoint(&ckpts).expect("at least one epoch").accuracy(test)
}

/// Test accuracy after retraining on `cleaned`, minus `baseline_accuracy`.
pub fn retrain_delta(
    cleaned: &Dataset,
    val: &Dataset,
    test: &Dataset,
    cfg: &ModelConfig,
    baseline_accuracy: f64,
) -> Result<f64> {
    Ok(test_accuracy(cleaned, val, test, cfg)? - baseline_accuracy)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("correlation of a constant ranking".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation of two aligned score vectors.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::arg("score vectors differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::arg("spearman needs at least two ids"));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Spearman correlation between two tables over the same ids.
pub fn spearman_tables(a: &ScoreTable, b: &ScoreTable) -> Result<f64> {
    let bm: HashMap<u64, f64> = b.score_map();
    if bm.len() != a.len() {
        return Err(Error::arg("score tables cover different id sets"));
    }
    let mut xs = Vec::with_capacity(a.len());
    let mut ys = Vec::with_capacity(a.len());
    for e in &a.entries {
        let y = bm
            .get(&e.id)
            .ok_or_else(|| Error::arg(format!("id {} missing from {}", e.id, b.method)))?;
        xs.push(e.score);
        ys.push(*y);
    }
    spearman(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanMatrix {
    pub methods: Vec<String>,
    /// Entries are `null` where a correlation is undefined.
    pub matrix: Vec<Vec<Option<f64>>>,
}

pub fn spearman_matrix(tables: &[ScoreTable]) -> Result<SpearmanMatrix> {
    let k = tables.len();
    let mut matrix = vec![vec![None; k]; k];
    for i in 0..k {
        matrix[i][i] = Some(1.0);
        for j in i + 1..k {
            let rho = match spearman_tables(&tables[i], &tables[j]) {
                Ok(r) => Some(r),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            };
            matrix[i][j] = rho;
            matrix[j][i] = rho;
        }
    }
    Ok(SpearmanMatrix {
        methods: tables.iter().map(|t| t.method.clone()).collect(),
        matrix,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheck {
    pub empirical_ratio: f64,
    pub analytic_ratio: f64,
    pub same_label_pairs: usize,
    pub different_label_pairs: usize,
    pub mean_same: f64,
    pub mean_different: f64,
    /// Mean probability assigned to the observed label.
    pub mean_confidence: f64,
}

/// Mean `|G|` over sampled same-label pairs divided by mean `|G|` over
/// different-label pairs.
pub fn theory_ratio_from_records(records: &[ProbRecord], pairs: usize, seed: u64) -> Result<TheoryCheck> {
    use rand::Rng;
    if records.len() < 2 || pairs < 2 {
        return Err(Error::arg("theory check needs at least two records and two pairs"));
    }
    let num_classes = records[0].num_classes();
    let mut rng = rng::stream(seed, Stream::Pairs, 0);
    let (mut same, mut diff) = (Vec::new(), Vec::new());
    for _ in 0..pairs {
        let i = rng.random_range(0..records.len());
        let mut j = rng.random_range(0..records.len() - 1);
        if j >= i {
            j += 1;
        }
        let g = empirical_g(&records[i], &records[j])?.abs();
        if records[i].label == records[j].label {
            same.push(g);
        } else {
            diff.push(g);
        }
    }
    if same.is_empty() || diff.is_empty() {
        return Err(Error::arg(
            "sampled pairs do not cover both same- and different-label cases",
        ));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ms, md) = (mean(&same), mean(&diff));
    if md == 0.0 {
        return Err(Error::UndefinedMetric("different-label kernel is zero".into()));
    }
    Ok(TheoryCheck {
        empirical_ratio: ms / md,
        analytic_ratio: num_classes as f64 - 1.0,
        same_label_pairs: same.len(),
        different_label_pairs: diff.len(),
        mean_same: ms,
        mean_different: md,
        mean_confidence: records.iter().map(|r| r.probs[r.label]).sum::<f64>() / records.len() as f64,
    })
}

/// The kernel-ratio check on a trained model, sampling pairs among examples
/// whose observed label matches ground truth (all examples without truth).
pub fn theory_ratio_check(d: &Dataset, model: &ModelCheckpoint, pairs: usize, seed: u64) -> Result<TheoryCheck> {
    let probs = model.predict_proba_batch(d.features())?;
    let clean: Vec<usize> = match d.true_labels() {
        Some(t) => (0..d.len()).filter(|&i| t[i] == d.labels()[i]).collect(),
        None => (0..d.len()).collect(),
    };
    let records = clean
        .iter()
        .map(|&i| ProbRecord::new(d.ids()[i], d.labels()[i], probs.row(i).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    theory_ratio_from_records(&records, pairs, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseEntry;

    fn report(ids: &[u64]) -> NoiseReport {
        NoiseReport {
            entries: ids
                .iter()
                .map(|&id| NoiseEntry {
                    id,
                    original_label: 0,
                    corrupted_label: 1,
                })
                .collect(),
            spec: None,
        }
    }

    #[test]
    fn detection_edges() {
        let noise = report(&[2, 5]);
        let perfect = [5, 2, 0, 1, 3, 4];
        for t in default_t_grid() {
            assert_eq!(detection_accuracy(&perfect, &noise, t).unwrap(), 1.0);
        }
        let worst = [0, 1, 3, 4, 2, 5];
        assert_eq!(detection_accuracy(&worst, &noise, 1.0).unwrap(), 0.0);
        assert!(matches!(
            detection_accuracy(&perfect, &report(&[]), 0.5),
            Err(Error::UndefinedMetric(_))
        ));
        assert_eq!(detection_accuracy(&[2, 0, 5], &noise, 0.5).unwrap(), 1.0);
        assert_eq!(detection_accuracy(&[2, 0, 5], &noise, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_identity_and_reverse() {
        let x = [0.3, 1.2, -4.0, 7.5, 2.2];
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &rev).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn err_counting() {
        let truth = vec![0, 1, 0, 1];
        let feats = ndarray::Array2::zeros((4, 1));
        let before = Dataset::with_sequential_ids(feats, vec![1, 0, 0, 1], Some(truth), 2).unwrap();
        assert_eq!(error_reduction_rate(&before, &before).unwrap(), 0.0);
        let fixed = before.with_labels(vec![0, 1, 0, 1]).unwrap();
        assert_eq!(error_reduction_rate(&before, &fixed).unwrap(), 1.0);
        let half = before.with_labels(vec![0, 0, 0, 1]).unwrap();
        assert_eq!(error_reduction_rate(&before, &half).unwrap(), 0.5);
        let removed = before.select(&[1, 2, 3]);
        assert_eq!(error_reduction_rate(&before, &removed).unwrap(), 0.5);
        assert!(matches!(
            error_reduction_rate(&fixed, &fixed),
            Err(Error::UndefinedMetric(_))
        ));
    }
}
