//! Nearest-neighbour label auditing in penultimate feature space.
//!
//! Each audited example is scored by the fraction of its `k` most similar
//! auxiliary examples that carry its observed label. Examples are ranked by
//! ascending score, and the lowest-scoring fraction `p` is either removed or
//! relabelled to the neighbours' majority class when that class holds more
//! than a fraction `tau` of the neighbourhood.

use std::collections::HashMap;
use std::io::Write;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AuxiliarySet, Dataset};
use crate::error::{Error, Result};
use crate::model::ModelCheckpoint;
use crate::scores::{rank_ascending, ScoreEntry, ScoreTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Similarity {
    #[serde(rename = "cos")]
    Cosine,
    #[serde(rename = "dot")]
    Dot,
}

impl Similarity {
    pub fn method_name(self) -> &'static str {
        match self {
            Similarity::Cosine => "sim-cos",
            Similarity::Dot => "sim-dot",
        }
    }

    /// Similarity of two vectors.
    pub fn eval(self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
        let dot = a.dot(&b);
        match self {
            Similarity::Dot => Ok(dot),
            Similarity::Cosine => {
                let denom = a.dot(&a).sqrt() * b.dot(&b).sqrt();
                if denom == 0.0 {
                    return Err(Error::UndefinedScore("cosine similarity of a zero vector".into()));
                }
                Ok(dot / denom)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u64,
    pub similarity: f64,
    pub label: usize,
}

/// The `k` auxiliary examples most similar to a query, most similar first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub query_id: u64,
    pub neighbors: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn k(&self) -> usize {
        self.neighbors.len()
    }
}

/// Exact full-scan neighbour search over a fixed auxiliary feature matrix.
pub struct NeighborIndex<'a> {
    aux: &'a Dataset,
    norms: Vec<f64>,
    measure: Similarity,
}

impl<'a> NeighborIndex<'a> {
    /// `aux` must already hold the features similarity is measured in.
    pub fn new(aux: &'a AuxiliarySet, measure: Similarity) -> Result<Self> {
        let data = aux.dataset();
        let norms: Vec<f64> = data.features().rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        if measure == Similarity::Cosine {
            if let Some(i) = norms.iter().position(|&n| n == 0.0) {
                return Err(Error::UndefinedScore(format!(
                    "auxiliary id {} has a zero feature vector",
                    data.ids()[i]
                )));
            }
        }
        Ok(NeighborIndex {
            aux: data,
            norms,
            measure,
        })
    }

    pub fn len(&self) -> usize {
        self.aux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aux.is_empty()
    }

    /// Top `k` by similarity; equal similarities go to the smaller id.
    pub fn query(&self, query_id: u64, q: ArrayView1<f64>, k: usize) -> Result<NeighborSet> {
        let m = self.aux.len();
        if k == 0 || k > m {
            return Err(Error::arg(format!("k = {k} must be in [1, {m}]")));
        }
        if q.len() != self.aux.dim() {
            return Err(Error::arg(format!(
                "query has dimension {}, auxiliary features {}",
                q.len(),
                self.aux.dim()
            )));
        }
        let dots = self.aux.features().dot(&q);
        let sims: Vec<f64> = match self.measure {
            Similarity::Dot => dots.to_vec(),
            Similarity::Cosine => {
                let qn = q.dot(&q).sqrt();
                if qn == 0.0 {
                    return Err(Error::UndefinedScore(format!(
                        "query id {query_id} has a zero feature vector"
                    )));
                }
                dots.iter().zip(&self.norms).map(|(d, n)| d / (qn * n)).collect()
            }
        };
        let ids = self.aux.ids();
        let order = |a: &usize, b: &usize| sims[*b].total_cmp(&sims[*a]).then(ids[*a].cmp(&ids[*b]));
        let mut idx: Vec<usize> = (0..m).collect();
        if k < m {
            idx.select_nth_unstable_by(k - 1, order);
            idx.truncate(k);
        }
        idx.sort_unstable_by(order);
        Ok(NeighborSet {
            query_id,
            neighbors: idx
                .into_iter()
                .map(|j| Neighbor {
                    id: ids[j],
                    similarity: sims[j],
                    label: self.aux.labels()[j],
                })
                .collect(),
        })
    }
}

/// The `k` most similar auxiliary examples to `q`.
pub fn knn(
    query_id: u64,
    q: ArrayView1<f64>,
    aux: &AuxiliarySet,
    k: usize,
    measure: Similarity,
) -> Result<NeighborSet> {
    NeighborIndex::new(aux, measure)?.query(query_id, q, k)
}

/// Fraction of neighbours labelled `label`.
pub fn label_agreement_score(ns: &NeighborSet, label: usize) -> f64 {
    if ns.neighbors.is_empty() {
        return 0.0;
    }
    let hits = ns.neighbors.iter().filter(|n| n.label == label).count();
    hits as f64 / ns.k() as f64
}

/// Ascending by score, ties by ascending id.
pub fn rank_suspicious(scores: &[ScoreEntry]) -> Vec<u64> {
    rank_ascending(scores)
}

/// The neighbours' most frequent label (smallest class on ties) if its share
/// strictly exceeds `tau`, otherwise `current`.
pub fn mode_rectify(ns: &NeighborSet, current: usize, tau: f64) -> usize {
    let Some(max_label) = ns.neighbors.iter().map(|n| n.label).max() else {
        return current;
    };
    let mut counts = vec![0usize; max_label + 1];
    for n in &ns.neighbors {
        counts[n.label] += 1;
    }
    let (mode, &count) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty");
    if count as f64 / ns.k() as f64 > tau {
        mode
    } else {
        current
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RectifyAction {
    Rectify,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectifyConfig {
    pub k: usize,
    /// Fraction of the ranked dataset to act on.
    pub p: f64,
    pub tau: f64,
    pub action: RectifyAction,
}

impl Default for RectifyConfig {
    fn default() -> Self {
        RectifyConfig {
            k: 100,
            p: 0.10,
            tau: 0.8,
            action: RectifyAction::Rectify,
        }
    }
}

impl RectifyConfig {
    pub fn validate(&self, aux_size: usize) -> Result<()> {
        if self.k == 0 || self.k > aux_size {
            return Err(Error::arg(format!("k = {} must be in [1, {aux_size}]", self.k)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::arg(format!("p = {} not in (0, 1]", self.p)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::arg(format!("tau = {} not in (0, 1]", self.tau)));
        }
        Ok(())
    }

    /// `ceil(p * n)`.
    pub fn prefix_len(&self, n: usize) -> usize {
        ((self.p * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Rectified,
    Removed,
    Kept,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Rectified => "rectified",
            Decision::Removed => "removed",
            Decision::Kept => "kept",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectifyEntry {
    pub id: u64,
    pub old_label: usize,
    pub new_label: usize,
    pub score: f64,
    pub decision: Decision,
}

pub fn write_rectify_log<W: Write>(log: &[RectifyEntry], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "old_label", "new_label", "score", "decision"])?;
    for e in log {
        w.write_record([
            e.id.to_string(),
            e.old_label.to_string(),
            e.new_label.to_string(),
            format!("{:?}", e.score),
            e.decision.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Neighbour sets and label-agreement scores for every audited example.
#[derive(Debug, Clone)]
pub struct Detection {
    pub neighbors: Vec<NeighborSet>,
    pub scores: ScoreTable,
}

/// Score every example of `d` against `aux`. Both must already hold the
/// features similarity is measured in.
pub fn detect(d: &Dataset, aux: &AuxiliarySet, k: usize, measure: Similarity) -> Result<Detection> {
    if d.dim() != aux.dataset().dim() {
        return Err(Error::arg(format!(
            "audited features are {}-dim, auxiliary {}-dim",
            d.dim(),
            aux.dataset().dim()
        )));
    }
    let index = NeighborIndex::new(aux, measure)?;
    let neighbors = (0..d.len())
        .into_par_iter()
        .map(|i| index.query(d.ids()[i], d.row(i), k))
        .collect::<Result<Vec<_>>>()?;
    let entries = neighbors
        .iter()
        .zip(d.labels())
        .map(|(ns, &y)| ScoreEntry {
            id: ns.query_id,
            score: label_agreement_score(ns, y),
        })
        .collect();
    Ok(Detection {
        neighbors,
        scores: ScoreTable::new(measure.method_name(), entries),
    })
}

#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub dataset: Dataset,
    pub scores: ScoreTable,
    pub log: Vec<RectifyEntry>,
}

/// Detect and rectify (or remove) on features that are already penultimate.
pub fn audit_features(
    d: &Dataset,
    aux: &AuxiliarySet,
    cfg: &RectifyConfig,
    measure: Similarity,
) -> Result<AuditOutcome> {
    audit_embedded(d, d, aux, cfg, measure)
}

/// Map both sets through the model's penultimate layer, then audit. The
/// returned dataset keeps the original input features.
pub fn audit(
    d: &Dataset,
    aux: &AuxiliarySet,
    model: &ModelCheckpoint,
    cfg: &RectifyConfig,
    measure: Similarity,
) -> Result<AuditOutcome> {
    let (embedded, embedded_aux) = embed_pair(d, aux, model)?;
    audit_embedded(d, &embedded, &embedded_aux, cfg, measure)
}

/// Scores come from `embedded`; edits are applied to `original`, which has
/// the same ids and labels.
fn audit_embedded(
    original: &Dataset,
    embedded: &Dataset,
    aux: &AuxiliarySet,
    cfg: &RectifyConfig,
    measure: Similarity,
) -> Result<AuditOutcome> {
    cfg.validate(aux.len())?;
    aux.check_disjoint(embedded)?;
    let det = detect(embedded, aux, cfg.k, measure)?;
    let ranking = det.scores.ranking();
    let prefix = cfg.prefix_len(embedded.len());
    let positions: HashMap<u64, usize> = embedded.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut labels = original.labels().to_vec();
    let mut removed = vec![false; original.len()];
    let mut log = Vec::with_capacity(prefix);
    for &id in &ranking[..prefix] {
        let i = positions[&id];
        let old = labels[i];
        let score = det.scores.entries[i].score;
        let (new, decision) = match cfg.action {
            RectifyAction::Remove => {
                removed[i] = true;
                (old, Decision::Removed)
            }
            RectifyAction::Rectify => {
                let new = mode_rectify(&det.neighbors[i], old, cfg.tau);
                labels[i] = new;
                (
                    new,
                    if new != old {
                        Decision::Rectified
                    } else {
                        Decision::Kept
                    },
                )
            }
        };
        log.push(RectifyEntry {
            id,
            old_label: old,
            new_label: new,
            score,
            decision,
        });
    }
    let relabelled = original.with_labels(labels)?;
    let dataset = if removed.iter().any(|&r| r) {
        let keep: Vec<usize> = (0..original.len()).filter(|&i| !removed[i]).collect();
        relabelled.select(&keep)
    } else {
        relabelled
    };
    Ok(AuditOutcome {
        dataset,
        scores: det.scores,
        log,
    })
}

/// Penultimate features for an audited set and its auxiliary set.
pub fn embed_pair(d: &Dataset, aux: &AuxiliarySet, model: &ModelCheckpoint) -> Result<(Dataset, AuxiliarySet)> {
    let embedded = model.embed(d)?;
    let embedded_aux = AuxiliarySet::trusted(model.embed(aux.dataset())?)?;
    Ok((embedded, embedded_aux))
}

/// Penultimate feature matrix for any dataset, or the raw features when no
/// model is given.
pub fn features_of(d: &Dataset, model: Option<&ModelCheckpoint>) -> Result<Array2<f64>> {
    match model {
        Some(m) => m.penultimate_batch(d.features()),
        None => Ok(d.features().clone()),
    }
}
