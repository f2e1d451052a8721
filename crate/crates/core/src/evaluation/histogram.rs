//! Similarity and feature-norm distributions of corrupted examples.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelCheckpoint;
use crate::noise::NoiseReport;
use crate::similarity::{features_of, Similarity};

pub const HISTOGRAM_BINS: usize = 64;

/// Uniform bins over `[lo, hi]`; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub total: u64,
    pub mean: Option<f64>,
}

impl Histogram {
    /// Bin `values` over `[lo, hi]`. A degenerate range gets a single bin.
    pub fn with_range(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        if values.is_empty() {
            return Histogram {
                lo,
                hi,
                counts: vec![0; bins],
                total: 0,
                mean: None,
            };
        }
        let bins = if hi > lo { bins } else { 1 };
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let b = if bins == 1 {
                0
            } else {
                (((v - lo) / width) as usize).min(bins - 1)
            };
            counts[b] += 1;
        }
        Histogram {
            lo,
            hi,
            counts,
            total: values.len() as u64,
            mean: Some(values.iter().sum::<f64>() / values.len() as f64),
        }
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let b = self.counts.len();
        (0..=b)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / b as f64)
            .collect()
    }
}

/// Two distributions binned over their common observed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPair {
    pub first_label: String,
    pub first: Histogram,
    pub second_label: String,
    pub second: Histogram,
}

impl HistogramPair {
    fn build(first_label: &str, a: &[f64], second_label: &str, b: &[f64]) -> Self {
        let (lo, hi) = a
            .iter()
            .chain(b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
        HistogramPair {
            first_label: first_label.into(),
            first: Histogram::with_range(a, lo, hi, HISTOGRAM_BINS),
            second_label: second_label.into(),
            second: Histogram::with_range(b, lo, hi, HISTOGRAM_BINS),
        }
    }
}

fn truth(d: &Dataset) -> Result<&[usize]> {
    d.true_labels()
        .ok_or_else(|| Error::UndefinedMetric("histograms need ground-truth labels".into()))
}

/// For every corrupted example, its similarity to each clean example of its
/// true class (`first`) and of every other class (`second`).
pub fn similarity_histograms(
    d: &Dataset,
    noise: &NoiseReport,
    model: Option<&ModelCheckpoint>,
    measure: Similarity,
) -> Result<HistogramPair> {
    let truth = truth(d)?;
    let features = features_of(d, model)?;
    let (corrupted, clean): (Vec<usize>, Vec<usize>) = (0..d.len()).partition(|&i| noise.contains(d.ids()[i]));
    let normalize = |m: Array2<f64>| -> Result<Array2<f64>> {
        match measure {
            Similarity::Dot => Ok(m),
            Similarity::Cosine => {
                let mut m = m;
                for mut row in m.rows_mut() {
                    let n = row.dot(&row).sqrt();
                    if n == 0.0 {
                        return Err(Error::UndefinedScore(
                            "cosine similarity of a zero feature vector".into(),
                        ));
                    }
                    row /= n;
                }
                Ok(m)
            }
        }
    };
    let a = normalize(features.select(ndarray::Axis(0), &corrupted))?;
    let b = normalize(features.select(ndarray::Axis(0), &clean))?;
    let sims = a.dot(&b.t());
    let (mut same, mut other) = (Vec::new(), Vec::new());
    for (ri, &i) in corrupted.iter().enumerate() {
        for (rj, &j) in clean.iter().enumerate() {
            if truth[i] == truth[j] {
                same.push(sims[(ri, rj)]);
            } else {
                other.push(sims[(ri, rj)]);
            }
        }
    }
    Ok(HistogramPair::build("true_class", &same, "other_class", &other))
}

/// Penultimate feature norms of corrupted (`first`) and clean (`second`)
/// examples.
pub fn norm_histograms(d: &Dataset, noise: &NoiseReport, model: Option<&ModelCheckpoint>) -> Result<HistogramPair> {
    let features = features_of(d, model)?;
    let (mut corrupted, mut clean) = (Vec::new(), Vec::new());
    for (i, row) in features.rows().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if noise.contains(d.ids()[i]) {
            corrupted.push(n);
        } else {
            clean.push(n);
        }
    }
    Ok(HistogramPair::build("corrupted", &corrupted, "clean", &clean))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conserves_counts() {
        let v = [0.1, 0.5, 0.5, 0.9, 1.0, -0.3];
        let h = Histogram::with_range(&v, -0.3, 1.0, HISTOGRAM_BINS);
        assert_eq!(h.counts.iter().sum::<u64>(), 6);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[HISTOGRAM_BINS - 1], 1);
        assert_eq!(h.bin_edges().len(), HISTOGRAM_BINS + 1);
    }

    #[test]
    fn degenerate_range_single_bin() {
        let h = Histogram::with_range(&[0.0, 0.0, 0.0], 0.0, 0.0, HISTOGRAM_BINS);
        assert_eq!(h.counts, vec![3]);
    }

    #[test]
    fn empty_values() {
        let h = Histogram::with_range(&[], 0.0, 1.0, HISTOGRAM_BINS);
        assert_eq!(h.total, 0);
        assert!(h.counts.iter().all(|&c| c == 0));
        assert_eq!(h.mean, None);
    }
}
