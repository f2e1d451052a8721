//! Controlled label corruption: uniform flips, class-consistent
//! ("ambiguity") flips through a derangement, and concentrated flips of a
//! dense cluster to a single target class.

use std::io::{Read, Write};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Neighbours used to estimate local density for concentrated noise.
pub const DENSITY_NEIGHBORS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseKind {
    Uniform,
    /// Every selected example of class `i` is relabelled `mapping[i]`.
    Ambiguity {
        mapping: Vec<usize>,
    },
    /// A dense cluster of `source` is relabelled `target`.
    Concentrated {
        source: usize,
        target: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub rate: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::arg(format!("noise rate {} not in (0, 1]", self.rate)));
        }
        match &self.kind {
            NoiseKind::Uniform => {}
            NoiseKind::Ambiguity { mapping } => validate_derangement(mapping, num_classes)?,
            NoiseKind::Concentrated { source, target } => {
                if source == target {
                    return Err(Error::arg("concentrated noise needs target != source"));
                }
                if *source >= num_classes || *target >= num_classes {
                    return Err(Error::arg("concentrated noise class out of range"));
                }
            }
        }
        Ok(())
    }

    /// Apply this spec to `d`.
    pub fn inject(&self, d: &Dataset) -> Result<(Dataset, NoiseReport)> {
        match &self.kind {
            NoiseKind::Uniform => inject_uniform(d, self.rate, self.seed),
            NoiseKind::Ambiguity { mapping } => inject_ambiguity(d, self.rate, mapping, self.seed),
            NoiseKind::Concentrated { source, target } => {
                inject_concentrated(d, self.rate, *source, *target, self.seed)
            }
        }
    }
}

/// The cyclic shift `i -> (i + 1) mod N`.
pub fn cyclic_derangement(num_classes: usize) -> Vec<usize> {
    (0..num_classes).map(|i| (i + 1) % num_classes).collect()
}

fn validate_derangement(mapping: &[usize], num_classes: usize) -> Result<()> {
    if mapping.len() != num_classes {
        return Err(Error::arg(format!(
            "mapping has {} entries for {num_classes} classes",
            mapping.len()
        )));
    }
    let mut hit = vec![false; num_classes];
    for (i, &h) in mapping.iter().enumerate() {
        if h >= num_classes {
            return Err(Error::arg(format!("mapping sends {i} to out-of-range class {h}")));
        }
        if h == i {
            return Err(Error::arg(format!("mapping has fixed point {i}")));
        }
        if std::mem::replace(&mut hit[h], true) {
            return Err(Error::arg(format!("mapping sends two classes to {h}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseEntry {
    pub id: u64,
    pub original_label: usize,
    pub corrupted_label: usize,
}

/// Which examples were corrupted, and how. Entries are sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    pub entries: Vec<NoiseEntry>,
    pub spec: Option<NoiseSpec>,
}

impl NoiseReport {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.entries.binary_search_by_key(&id, |e| e.id).is_ok()
    }

    pub fn corrupted_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|e| e.id)
    }

    /// Reapply the recorded flips to the uncorrupted dataset.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        let mut labels = d.labels().to_vec();
        for e in &self.entries {
            let pos = d
                .position(e.id)
                .ok_or_else(|| Error::arg(format!("noise entry for unknown id {}", e.id)))?;
            if labels[pos] != e.original_label {
                return Err(Error::arg(format!(
                    "id {} has label {}, report expects {}",
                    e.id, labels[pos], e.original_label
                )));
            }
            labels[pos] = e.corrupted_label;
        }
        with_truth(d)?.with_labels(labels)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "original_label", "corrupted_label"])?;
        for e in &self.entries {
            w.serialize((e.id, e.original_label, e.corrupted_label))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["id", "original_label", "corrupted_label"] {
            return Err(Error::format(
                "noise report header must be `id,original_label,corrupted_label`",
            ));
        }
        let mut entries = Vec::new();
        for row in rdr.deserialize() {
            let (id, original_label, corrupted_label): (u64, usize, usize) =
                row.map_err(|e| Error::format(format!("noise report: {e}")))?;
            entries.push(NoiseEntry {
                id,
                original_label,
                corrupted_label,
            });
        }
        entries.sort_by_key(|e| e.id);
        Ok(NoiseReport { entries, spec: None })
    }
}

fn corrupted_count(rate: f64, n: usize) -> usize {
    // Guard against 0.1 * 1000 landing a hair under 100.
    ((rate * n as f64) + 1e-9).floor() as usize
}

/// Ground truth defaults to the labels observed before the first injection.
fn with_truth(d: &Dataset) -> Result<Dataset> {
    match d.true_labels() {
        Some(_) => Ok(d.clone()),
        None => d.with_true_labels(Some(d.labels().to_vec())),
    }
}

fn finish(d: &Dataset, flips: Vec<(usize, usize)>, spec: NoiseSpec) -> Result<(Dataset, NoiseReport)> {
    let mut labels = d.labels().to_vec();
    let mut entries = Vec::with_capacity(flips.len());
    for (pos, new) in flips {
        debug_assert_ne!(labels[pos], new);
        entries.push(NoiseEntry {
            id: d.ids()[pos],
            original_label: labels[pos],
            corrupted_label: new,
        });
        labels[pos] = new;
    }
    entries.sort_by_key(|e| e.id);
    let out = with_truth(d)?.with_labels(labels)?;
    Ok((
        out,
        NoiseReport {
            entries,
            spec: Some(spec),
        },
    ))
}

/// Flip `floor(rate * n)` uniformly chosen labels, each to a uniformly chosen
/// different class.
pub fn inject_uniform(d: &Dataset, rate: f64, seed: u64) -> Result<(Dataset, NoiseReport)> {
    let spec = NoiseSpec {
        kind: NoiseKind::Uniform,
        rate,
        seed,
    };
    spec.validate(d.num_classes())?;
    let classes = d.num_classes();
    if classes < 2 {
        return Err(Error::arg("uniform noise needs at least two classes"));
    }
    let count = corrupted_count(rate, d.len());
    let mut rng = rng::stream(seed, Stream::Noise, 0);
    let mut picked = index::sample(&mut rng, d.len(), count).into_vec();
    picked.sort_unstable();
    let flips = picked
        .into_iter()
        .map(|pos| {
            let old = d.labels()[pos];
            let r = rng.random_range(0..classes - 1);
            (pos, if r >= old { r + 1 } else { r })
        })
        .collect();
    finish(d, flips, spec)
}

/// Within each class `c`, relabel `floor(rate * |c|)` uniformly chosen members
/// as `mapping[c]`.
pub fn inject_ambiguity(d: &Dataset, rate: f64, mapping: &[usize], seed: u64) -> Result<(Dataset, NoiseReport)> {
    let spec = NoiseSpec {
        kind: NoiseKind::Ambiguity {
            mapping: mapping.to_vec(),
        },
        rate,
        seed,
    };
    spec.validate(d.num_classes())?;
    let mut flips = Vec::new();
    for (c, &target) in mapping.iter().enumerate() {
        let members: Vec<usize> = (0..d.len()).filter(|&i| d.labels()[i] == c).collect();
        let count = corrupted_count(rate, members.len());
        let mut rng = rng::stream(seed, Stream::Noise, c as u64 + 1);
        let mut picked = index::sample(&mut rng, members.len(), count).into_vec();
        picked.sort_unstable();
        flips.extend(picked.into_iter().map(|k| (members[k], target)));
    }
    finish(d, flips, spec)
}

fn sq_dist(d: &Dataset, a: usize, b: usize) -> f64 {
    d.row(a)
        .iter()
        .zip(d.row(b).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Relabel to `target` the `floor(rate * n)` members of `source` closest to the
/// densest `source` member, where density is the mean distance to its
/// [`DENSITY_NEIGHBORS`] nearest same-class neighbours. Ties go to the
/// smaller id.
pub fn inject_concentrated(
    d: &Dataset,
    rate: f64,
    source: usize,
    target: usize,
    seed: u64,
) -> Result<(Dataset, NoiseReport)> {
    let spec = NoiseSpec {
        kind: NoiseKind::Concentrated { source, target },
        rate,
        seed,
    };
    spec.validate(d.num_classes())?;
    let count = corrupted_count(rate, d.len());
    let members: Vec<usize> = (0..d.len()).filter(|&i| d.labels()[i] == source).collect();
    if members.len() < count {
        return Err(Error::arg(format!(
            "source class {source} has {} members, {count} requested",
            members.len()
        )));
    }
    if count == 0 {
        return finish(d, Vec::new(), spec);
    }

    let by_id = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(d.ids()[a.1].cmp(&d.ids()[b.1]));
    let mut density_seed: Option<(f64, usize)> = None;
    let mut dists = Vec::with_capacity(members.len());
    for &i in &members {
        dists.clear();
        dists.extend(members.iter().filter(|&&j| j != i).map(|&j| sq_dist(d, i, j).sqrt()));
        let k = DENSITY_NEIGHBORS.min(dists.len());
        let mean = if k == 0 {
            0.0
        } else {
            dists.select_nth_unstable_by(k - 1, f64::total_cmp);
            dists[..k].iter().sum::<f64>() / k as f64
        };
        let cand = (mean, i);
        if density_seed.is_none_or(|best| by_id(&cand, &best).is_lt()) {
            density_seed = Some(cand);
        }
    }
    let center = density_seed.expect("members non-empty").1;

    let mut ranked: Vec<(f64, usize)> = members.iter().map(|&j| (sq_dist(d, center, j), j)).collect();
    ranked.sort_by(by_id);
    let flips = ranked[..count].iter().map(|&(_, j)| (j, target)).collect();
    finish(d, flips, spec)
}
