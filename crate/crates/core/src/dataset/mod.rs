//! Datasets, the auxiliary (trusted) set, feature-file I/O and the synthetic
//! Gaussian-mixture generator.

mod binary;
mod csv_io;
mod synth;

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub use binary::{read_binary, write_binary};
pub use csv_io::{read_csv, write_csv};
pub use synth::{generate_synthetic, SynthSpec};

/// On-disk representation of a feature file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    Binary,
    Csv,
}

impl FeatureFormat {
    /// Guess from the extension: `.csv` is CSV, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FeatureFormat::Csv,
            _ => FeatureFormat::Binary,
        }
    }
}

/// A labelled feature matrix.
///
/// Rows are examples. Labels are 0-based class indices. `true_labels`, when
/// present, is ground truth used only for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    true_labels: Option<Vec<usize>>,
    num_classes: usize,
    ids: Vec<u64>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        true_labels: Option<Vec<usize>>,
        num_classes: usize,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let n = features.nrows();
        if num_classes == 0 {
            return Err(Error::validation("num_classes must be positive"));
        }
        if labels.len() != n {
            return Err(Error::validation(format!("{} labels for {n} rows", labels.len())));
        }
        if ids.len() != n {
            return Err(Error::validation(format!("{} ids for {n} rows", ids.len())));
        }
        if let Some(pos) = labels.iter().position(|&y| y >= num_classes) {
            return Err(Error::validation(format!(
                "label {} at row {pos} is out of range for {num_classes} classes",
                labels[pos]
            )));
        }
        if let Some(truth) = &true_labels {
            if truth.len() != n {
                return Err(Error::validation(format!("{} true labels for {n} rows", truth.len())));
            }
            if let Some(pos) = truth.iter().position(|&y| y >= num_classes) {
                return Err(Error::validation(format!(
                    "true label {} at row {pos} is out of range for {num_classes} classes",
                    truth[pos]
                )));
            }
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            let d = features.ncols().max(1);
            return Err(Error::validation(format!(
                "non-finite feature at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(*id) {
                return Err(Error::validation(format!("duplicate id {id}")));
            }
        }
        Ok(Dataset {
            features,
            labels,
            true_labels,
            num_classes,
            ids,
        })
    }

    /// Dataset with ids `0..n`.
    pub fn with_sequential_ids(
        features: Array2<f64>,
        labels: Vec<usize>,
        true_labels: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        let ids = (0..features.nrows() as u64).collect();
        Self::new(features, labels, true_labels, num_classes, ids)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Row index of `id`, by linear scan.
    pub fn position(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// Same examples with the observed labels replaced.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            labels,
            self.true_labels.clone(),
            self.num_classes,
            self.ids.clone(),
        )
    }

    /// Same examples with ground truth attached (or replaced).
    pub fn with_true_labels(&self, truth: Option<Vec<usize>>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            self.labels.clone(),
            truth,
            self.num_classes,
            self.ids.clone(),
        )
    }

    /// Same examples with `features` swapped in, e.g. penultimate features.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.len() {
            return Err(Error::arg(format!(
                "replacement features have {} rows, dataset has {}",
                features.nrows(),
                self.len()
            )));
        }
        Self::new(
            features,
            self.labels.clone(),
            self.true_labels.clone(),
            self.num_classes,
            self.ids.clone(),
        )
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            true_labels: self
                .true_labels
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
            num_classes: self.num_classes,
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Number of observed labels that differ from ground truth.
    pub fn label_error_count(&self) -> Option<usize> {
        self.true_labels
            .as_ref()
            .map(|t| t.iter().zip(&self.labels).filter(|(a, b)| a != b).count())
    }

    pub fn load(path: &Path, format: FeatureFormat, num_classes: Option<usize>) -> Result<Self> {
        match format {
            FeatureFormat::Binary => {
                let bytes = std::fs::read(path)?;
                read_binary(&bytes)
            }
            FeatureFormat::Csv => {
                let file = std::fs::File::open(path)?;
                read_csv(file, num_classes)
            }
        }
    }

    pub fn save(&self, path: &Path, format: FeatureFormat) -> Result<()> {
        match format {
            FeatureFormat::Binary => std::fs::write(path, write_binary(self)?)?,
            FeatureFormat::Csv => {
                let file = std::fs::File::create(path)?;
                write_csv(self, file)?;
            }
        }
        Ok(())
    }
}

/// The small trusted labelled set neighbours are drawn from.
///
/// Its labels are treated as clean. Construction against an audited dataset
/// checks that no id is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliarySet {
    data: Dataset,
}

impl AuxiliarySet {
    /// Wrap `data` as the trusted set for auditing `audited`.
    pub fn new(data: Dataset, audited: &Dataset) -> Result<Self> {
        let aux = Self::trusted(data)?;
        aux.check_disjoint(audited)?;
        Ok(aux)
    }

    /// Wrap `data` without a disjointness check.
    pub fn trusted(data: Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::arg("auxiliary set must contain at least one example"));
        }
        Ok(AuxiliarySet { data })
    }

    pub fn check_disjoint(&self, audited: &Dataset) -> Result<()> {
        let ids: HashSet<u64> = audited.ids().iter().copied().collect();
        if let Some(id) = self.data.ids().iter().find(|id| ids.contains(id)) {
            return Err(Error::arg(format!(
                "auxiliary set shares id {id} with the audited dataset"
            )));
        }
        if audited.num_classes() != self.data.num_classes() {
            return Err(Error::arg(format!(
                "auxiliary set has {} classes, audited dataset {}",
                self.data.num_classes(),
                audited.num_classes()
            )));
        }
        Ok(())
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn into_dataset(self) -> Dataset {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Randomly move `m` examples of `d` into an auxiliary set.
///
/// Both parts keep the original row order.
pub fn split_aux(d: &Dataset, m: usize, seed: u64) -> Result<(Dataset, AuxiliarySet)> {
    let n = d.len();
    if m == 0 || m >= n {
        return Err(Error::arg(format!(
            "auxiliary size {m} must be in [1, {n}) for a dataset of {n} examples"
        )));
    }
    let mut rng = rng::stream(seed, Stream::Split, 0);
    let mut chosen = vec![false; n];
    for i in index::sample(&mut rng, n, m) {
        chosen[i] = true;
    }
    let (aux_idx, rest_idx): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| chosen[i]);
    let rest = d.select(&rest_idx);
    let aux = AuxiliarySet::new(d.select(&aux_idx), &rest)?;
    Ok((rest, aux))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy(n: usize) -> Dataset {
        let features = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let labels = (0..n).map(|i| i % 3).collect::<Vec<_>>();
        Dataset::with_sequential_ids(features, labels.clone(), Some(labels), 3).unwrap()
    }

    #[test]
    fn rejects_out_of_range_label() {
        let err = Dataset::with_sequential_ids(array![[0.0], [1.0]], vec![0, 3], None, 3);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_non_finite() {
        let err = Dataset::with_sequential_ids(array![[0.0], [f64::NAN]], vec![0, 1], None, 2);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = Dataset::new(array![[0.0], [1.0]], vec![0, 1], None, 2, vec![5, 5]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn split_aux_rejects_m_equal_n() {
        let d = toy(1000);
        assert!(matches!(split_aux(&d, 1000, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn split_aux_partitions() {
        let d = toy(1000);
        let (rest, aux) = split_aux(&d, 100, 7).unwrap();
        assert_eq!(rest.len(), 900);
        assert_eq!(aux.len(), 100);
        let a: HashSet<_> = rest.ids().iter().collect();
        assert!(aux.dataset().ids().iter().all(|id| !a.contains(id)));
        let (rest2, aux2) = split_aux(&d, 100, 7).unwrap();
        assert_eq!(rest, rest2);
        assert_eq!(aux, aux2);
    }

    #[test]
    fn aux_overlap_rejected() {
        let d = toy(10);
        let part = d.select(&[0, 1]);
        assert!(AuxiliarySet::new(part, &d).is_err());
    }
}
